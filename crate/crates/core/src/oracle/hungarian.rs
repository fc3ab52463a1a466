use crate::error::{Error, Result};

/// Minimum-cost perfect assignment of a square cost matrix (Kuhn–Munkres,
/// shortest-augmenting-path form with row/column potentials, `O(n^3)`).
///
/// Returns `assignment[row] = column` and the total cost.
pub fn hungarian_assignment(cost: &[Vec<f64>]) -> Result<(Vec<usize>, f64)> {
    let n = cost.len();
    if let Some(row) = cost.iter().find(|r| r.len() != n) {
        return Err(Error::ShapeMismatch {
            op: "hungarian_assignment",
            left: vec![n, row.len()],
            right: vec![n, n],
        });
    }
    if cost.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::invalid("cost matrix must be finite"));
    }
    if n == 0 {
        return Ok((Vec::new(), 0.0));
    }

    // 1-based internals; index 0 is the virtual column used to start each
    // augmentation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        row_of_col[0] = row;
        let mut col0 = 0;
        let mut min_to = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = row_of_col[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for col in 1..=n {
                if used[col] {
                    continue;
                }
                let reduced = cost[r0 - 1][col - 1] - u[r0] - v[col];
                if reduced < min_to[col] {
                    min_to[col] = reduced;
                    way[col] = col0;
                }
                if min_to[col] < delta {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for col in 0..=n {
                if used[col] {
                    u[row_of_col[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
            if row_of_col[col0] == 0 {
                break;
            }
        }
        loop {
            let col1 = way[col0];
            row_of_col[col0] = row_of_col[col1];
            col0 = col1;
            if col0 == 0 {
                break;
            }
        }
    }

    let mut assignment = vec![0; n];
    for col in 1..=n {
        assignment[row_of_col[col] - 1] = col - 1;
    }
    let total = assignment.iter().enumerate().map(|(r, &c)| cost[r][c]).sum();
    Ok((assignment, total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_examples() {
        let (a, c) = hungarian_assignment(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a, vec![0, 1]);
        assert_eq!(c, 0.0);
        let (_, c) = hungarian_assignment(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap();
        assert_eq!(c, 2.0);
        let (a, c) = hungarian_assignment(&[vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]]).unwrap();
        assert_eq!(c, 5.0);
        assert_eq!(a, vec![1, 0, 2]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            hungarian_assignment(&[vec![1.0, 2.0]]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(hungarian_assignment(&[vec![f64::NAN]]).is_err());
        assert_eq!(hungarian_assignment(&[]).unwrap().0, Vec::<usize>::new());
    }
}
