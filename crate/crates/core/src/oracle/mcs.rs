//! Maximum common induced subgraph by McSplit-style branch and bound.
//!
//! Candidate vertices are kept in label classes ("bidomains"): a left set
//! from `g1` and a right set from `g2` whose members agree on label and on
//! adjacency to every vertex matched so far. Matching `v -> w` splits each
//! bidomain by adjacency to `v` and `w`; the sum over bidomains of
//! `min(|left|, |right|)` bounds how many more vertices can still match.

use std::time::{Duration, Instant};

use super::{OracleResult, Provenance};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, Copy)]
pub struct McsOptions {
    /// Only map nodes carrying equal labels.
    pub respect_labels: bool,
    pub time_budget: Duration,
}

impl Default for McsOptions {
    fn default() -> Self {
        Self {
            respect_labels: true,
            time_budget: super::DEFAULT_ASTAR_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Bidomain {
    l: usize,
    r: usize,
    left_len: usize,
    right_len: usize,
}

struct Search<'a> {
    adj0: &'a [Vec<bool>],
    adj1: &'a [Vec<bool>],
    left: Vec<usize>,
    right: Vec<usize>,
    current: Vec<(usize, usize)>,
    incumbent: Vec<(usize, usize)>,
    goal: usize,
    deadline: Instant,
    nodes: u64,
    timed_out: bool,
}

/// Exact maximum common induced subgraph (connectedness not required).
///
/// Returns the size and one witness mapping `(u in g1, v in g2)`. When the
/// budget runs out the error carries the size of the best mapping found.
pub fn mcs_exact(g1: &Graph, g2: &Graph, options: McsOptions) -> Result<OracleResult> {
    if g1.is_empty() || g2.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let start = Instant::now();

    // Vertices are renumbered by descending degree so that "smallest id"
    // selection prefers high-degree vertices.
    let order0 = degree_order(g1);
    let order1 = degree_order(g2);
    let adj0 = relabeled_adjacency(g1, &order0);
    let adj1 = relabeled_adjacency(g2, &order1);
    let label0: Vec<u32> = order0.iter().map(|&v| label_of(g1, v, options)).collect();
    let label1: Vec<u32> = order1.iter().map(|&v| label_of(g2, v, options)).collect();

    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut domains = Vec::new();
    let mut classes: Vec<u32> = label0.clone();
    classes.sort_unstable();
    classes.dedup();
    for class in classes {
        let l: Vec<usize> = (0..label0.len()).filter(|&v| label0[v] == class).collect();
        let r: Vec<usize> = (0..label1.len()).filter(|&v| label1[v] == class).collect();
        if r.is_empty() {
            continue;
        }
        domains.push(Bidomain {
            l: left.len(),
            r: right.len(),
            left_len: l.len(),
            right_len: r.len(),
        });
        left.extend(l);
        right.extend(r);
    }

    let mut search = Search {
        adj0: &adj0,
        adj1: &adj1,
        left,
        right,
        current: Vec::new(),
        incumbent: Vec::new(),
        goal: g1.node_count().min(g2.node_count()),
        deadline: start + options.time_budget,
        nodes: 0,
        timed_out: false,
    };
    search.solve(domains);

    if search.timed_out {
        return Err(Error::BudgetExceeded {
            budget_secs: options.time_budget.as_secs_f64(),
            best_bound: search.incumbent.len(),
        });
    }
    let mut mapping: Vec<(usize, usize)> = search
        .incumbent
        .iter()
        .map(|&(v, w)| (order0[v], order1[w]))
        .collect();
    mapping.sort_unstable();
    Ok(OracleResult {
        value: mapping.len(),
        provenance: Provenance::Exact,
        mapping: Some(mapping),
        elapsed: start.elapsed(),
    })
}

fn label_of(g: &Graph, v: usize, options: McsOptions) -> u32 {
    if options.respect_labels {
        g.label(v)
    } else {
        0
    }
}

fn degree_order(g: &Graph) -> Vec<usize> {
    let mut order: Vec<usize> = (0..g.node_count()).collect();
    order.sort_by(|&a, &b| g.degree(b).cmp(&g.degree(a)).then(a.cmp(&b)));
    order
}

fn relabeled_adjacency(g: &Graph, order: &[usize]) -> Vec<Vec<bool>> {
    let n = order.len();
    let mut position = vec![0; n];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in g.edges() {
        adj[position[u]][position[v]] = true;
        adj[position[v]][position[u]] = true;
    }
    adj
}

impl Search<'_> {
    fn solve(&mut self, mut domains: Vec<Bidomain>) {
        self.nodes += 1;
        if self.nodes.is_multiple_of(1024) && Instant::now() >= self.deadline {
            self.timed_out = true;
        }
        if self.timed_out {
            return;
        }
        if self.current.len() > self.incumbent.len() {
            self.incumbent = self.current.clone();
        }
        let bound: usize = domains.iter().map(|d| d.left_len.min(d.right_len)).sum();
        if self.current.len() + bound <= self.incumbent.len() || self.incumbent.len() == self.goal {
            return;
        }
        let Some(bd_idx) = self.select_bidomain(&domains) else {
            return;
        };

        let bd = domains[bd_idx];
        let v = min_in(&self.left[bd.l..bd.l + bd.left_len]);
        // Move v past the end of its left range.
        let pos = bd.l + self.left[bd.l..bd.l + bd.left_len].iter().position(|&x| x == v).unwrap();
        self.left.swap(pos, bd.l + bd.left_len - 1);
        domains[bd_idx].left_len -= 1;
        domains[bd_idx].right_len -= 1;

        let right_len = domains[bd_idx].right_len;
        let mut last_w: Option<usize> = None;
        for _ in 0..=right_len {
            let range = bd.r..bd.r + right_len + 1;
            let idx = next_larger(&self.right[range.clone()], last_w)
                .expect("one candidate per iteration");
            let w = self.right[bd.r + idx];
            self.right.swap(bd.r + idx, bd.r + right_len);
            last_w = Some(w);

            let child = self.filter(&domains, v, w);
            self.current.push((v, w));
            self.solve(child);
            self.current.pop();
            if self.timed_out || self.incumbent.len() == self.goal {
                return;
            }
        }

        domains[bd_idx].right_len += 1;
        if domains[bd_idx].left_len == 0 {
            domains.swap_remove(bd_idx);
        }
        self.solve(domains);
    }

    fn select_bidomain(&self, domains: &[Bidomain]) -> Option<usize> {
        domains
            .iter()
            .enumerate()
            .min_by_key(|(_, d)| {
                (
                    d.left_len.max(d.right_len),
                    min_in(&self.left[d.l..d.l + d.left_len]),
                )
            })
            .map(|(i, _)| i)
    }

    fn filter(&mut self, domains: &[Bidomain], v: usize, w: usize) -> Vec<Bidomain> {
        let mut out = Vec::with_capacity(domains.len() * 2);
        for d in domains {
            let l_non = partition(&mut self.left[d.l..d.l + d.left_len], |x| !self.adj0[v][x]);
            let r_non = partition(&mut self.right[d.r..d.r + d.right_len], |x| !self.adj1[w][x]);
            let l_adj = d.left_len - l_non;
            let r_adj = d.right_len - r_non;
            if l_non > 0 && r_non > 0 {
                out.push(Bidomain {
                    l: d.l,
                    r: d.r,
                    left_len: l_non,
                    right_len: r_non,
                });
            }
            if l_adj > 0 && r_adj > 0 {
                out.push(Bidomain {
                    l: d.l + l_non,
                    r: d.r + r_non,
                    left_len: l_adj,
                    right_len: r_adj,
                });
            }
        }
        out
    }
}

fn min_in(xs: &[usize]) -> usize {
    *xs.iter().min().expect("non-empty domain")
}

/// Index of the smallest element strictly greater than `after`.
fn next_larger(xs: &[usize], after: Option<usize>) -> Option<usize> {
    xs.iter()
        .enumerate()
        .filter(|(_, &x)| after.is_none_or(|a| x > a))
        .min_by_key(|(_, &x)| x)
        .map(|(i, _)| i)
}

/// Moves elements satisfying `pred` to the front; returns their count.
fn partition(xs: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let mut k = 0;
    for i in 0..xs.len() {
        if pred(xs[i]) {
            xs.swap(i, k);
            k += 1;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> McsOptions {
        McsOptions::default()
    }

    fn check_witness(g1: &Graph, g2: &Graph, mapping: &[(usize, usize)]) {
        for &(a, b) in mapping {
            assert_eq!(g1.label(a), g2.label(b));
            for &(c, d) in mapping {
                if a != c {
                    assert_ne!(b, d);
                    assert_eq!(g1.has_edge(a, c), g2.has_edge(b, d));
                }
            }
        }
    }

    #[test]
    fn examples() {
        let tri = Graph::unlabeled("t", 3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let path = Graph::unlabeled("p", 3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(mcs_exact(&tri, &tri, opts()).unwrap().value, 3);
        let r = mcs_exact(&tri, &path, opts()).unwrap();
        assert_eq!(r.value, 2);
        check_witness(&tri, &path, r.mapping.as_ref().unwrap());
        let a = Graph::new("a", vec![0], []).unwrap();
        let b = Graph::new("b", vec![1], []).unwrap();
        assert_eq!(mcs_exact(&a, &b, opts()).unwrap().value, 0);
    }

    #[test]
    fn label_flag_can_be_disabled() {
        let a = Graph::new("a", vec![0], []).unwrap();
        let b = Graph::new("b", vec![1], []).unwrap();
        let o = McsOptions {
            respect_labels: false,
            ..opts()
        };
        assert_eq!(mcs_exact(&a, &b, o).unwrap().value, 1);
    }

    #[test]
    fn induced_not_just_subgraph() {
        // Path 0-1-2-3 vs 4-cycle: the cycle is not an induced subgraph of
        // the path; the best induced common subgraph is a 3-node path.
        let p4 = Graph::unlabeled("p", 4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let c4 = Graph::unlabeled("c", 4, [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let r = mcs_exact(&p4, &c4, opts()).unwrap();
        assert_eq!(r.value, 3);
        check_witness(&p4, &c4, r.mapping.as_ref().unwrap());
    }

    #[test]
    fn empty_graph_is_rejected() {
        let e = Graph::unlabeled("e", 0, []).unwrap();
        let a = Graph::unlabeled("a", 1, []).unwrap();
        assert!(matches!(mcs_exact(&e, &a, opts()), Err(Error::EmptyGraph)));
    }

    #[test]
    fn zero_budget_reports_best_bound() {
        let edges: Vec<_> = (0..30).flat_map(|i| [(i, (i + 1) % 30), (i, (i + 7) % 30)]).collect();
        let g1 = Graph::unlabeled("a", 30, edges.iter().copied()).unwrap();
        let edges2: Vec<_> = (0..30).flat_map(|i| [(i, (i + 1) % 30), (i, (i + 11) % 30)]).collect();
        let g2 = Graph::unlabeled("b", 30, edges2).unwrap();
        let o = McsOptions {
            respect_labels: true,
            time_budget: Duration::ZERO,
        };
        match mcs_exact(&g1, &g2, o) {
            Err(Error::BudgetExceeded { best_bound, .. }) => assert!(best_bound <= 30),
            Ok(r) => assert!(r.value <= 30),
            Err(e) => panic!("{e}"),
        }
    }
}
