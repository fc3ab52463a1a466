//! Graph edit distance under uniform costs: node insertion/deletion 1,
//! node substitution 0 for equal labels and 1 otherwise, edge
//! insertion/deletion 1.
//!
//! The exact and beam searches share one search space: the nodes of `g1`
//! are processed in index order and each is either substituted by an
//! unused node of `g2` or deleted; once all of `g1` is processed the
//! remaining nodes of `g2` (and their edges) are inserted.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::{hungarian_assignment, OracleResult, Provenance};
use crate::error::{Error, Result};
use crate::graph::Graph;

const DELETED: u32 = u32::MAX;

/// Exact cost of the edit path induced by a node mapping
/// (`mapping[u] = Some(v)` substitutes, `None` deletes; unmapped nodes of
/// `g2` are inserted).
pub fn edit_path_cost(g1: &Graph, g2: &Graph, mapping: &[Option<usize>]) -> Result<usize> {
    if mapping.len() != g1.node_count() {
        return Err(Error::invalid("mapping length differs from |g1|"));
    }
    let mut used = vec![false; g2.node_count()];
    let mut cost = 0;
    for (u, m) in mapping.iter().enumerate() {
        match *m {
            Some(v) => {
                if v >= g2.node_count() || std::mem::replace(&mut used[v], true) {
                    return Err(Error::invalid("mapping is not injective into g2"));
                }
                cost += usize::from(g1.label(u) != g2.label(v));
            }
            None => cost += 1,
        }
    }
    cost += used.iter().filter(|&&x| !x).count();
    let kept = g1
        .edges()
        .iter()
        .filter(|&&(a, b)| matches!((mapping[a], mapping[b]), (Some(x), Some(y)) if g2.has_edge(x, y)))
        .count();
    // deleted g1 edges plus inserted g2 edges
    cost += (g1.edge_count() - kept) + (g2.edge_count() - kept);
    Ok(cost)
}

struct Space<'a> {
    g1: &'a Graph,
    g2: &'a Graph,
    adj1: Vec<Vec<bool>>,
    adj2: Vec<Vec<bool>>,
    /// Edges of g1 with both endpoints among the first k nodes.
    prefix_edges1: Vec<usize>,
    label_count: usize,
}

#[derive(Clone)]
struct State {
    assigned: Vec<u32>,
    g: usize,
}

impl<'a> Space<'a> {
    fn new(g1: &'a Graph, g2: &'a Graph) -> Self {
        let n1 = g1.node_count();
        let mut prefix_edges1 = vec![0; n1 + 1];
        for &(_, v) in g1.edges() {
            // edge (u, v) with u < v becomes internal once v is processed
            prefix_edges1[v + 1] += 1;
        }
        for k in 1..=n1 {
            prefix_edges1[k] += prefix_edges1[k - 1];
        }
        let label_count = g1
            .labels()
            .iter()
            .chain(g2.labels())
            .copied()
            .max()
            .map_or(0, |m| m as usize + 1);
        Self {
            g1,
            g2,
            adj1: g1.adjacency_matrix(),
            adj2: g2.adjacency_matrix(),
            prefix_edges1,
            label_count,
        }
    }

    fn n1(&self) -> usize {
        self.g1.node_count()
    }

    fn used(&self, state: &State) -> Vec<bool> {
        let mut used = vec![false; self.g2.node_count()];
        for &t in &state.assigned {
            if t != DELETED {
                used[t as usize] = true;
            }
        }
        used
    }

    /// Admissible estimate of the cost still to pay from `state`.
    fn heuristic(&self, state: &State, used: &[bool]) -> usize {
        let k = state.assigned.len();
        let mut counts = vec![0i64; self.label_count];
        for u in k..self.n1() {
            counts[self.g1.label(u) as usize] += 1;
        }
        let mut shared = 0;
        let mut remaining2 = 0;
        for (v, &is_used) in used.iter().enumerate() {
            if !is_used {
                remaining2 += 1;
                let c = &mut counts[self.g2.label(v) as usize];
                if *c > 0 {
                    *c -= 1;
                    shared += 1;
                }
            }
        }
        let remaining1 = self.n1() - k;
        let node_bound = remaining1.max(remaining2) - shared;

        let open_edges1 = self.g1.edge_count() - self.prefix_edges1[k];
        let closed_edges2 = self
            .g2
            .edges()
            .iter()
            .filter(|&&(a, b)| used[a] && used[b])
            .count();
        let open_edges2 = self.g2.edge_count() - closed_edges2;
        node_bound + open_edges1.abs_diff(open_edges2)
    }

    /// Cost of inserting every unused node of g2 and every g2 edge touching one.
    fn completion_cost(&self, used: &[bool]) -> usize {
        let nodes = used.iter().filter(|&&u| !u).count();
        let edges = self
            .g2
            .edges()
            .iter()
            .filter(|&&(a, b)| !used[a] || !used[b])
            .count();
        nodes + edges
    }

    fn root(&self) -> State {
        State {
            assigned: Vec::with_capacity(self.n1()),
            g: 0,
        }
    }

    /// Children of `state` with their `f = g + h`; completed children carry
    /// their final cost. Ordered by target index, deletion last.
    fn children(&self, state: &State) -> Vec<(State, usize)> {
        let k = state.assigned.len();
        debug_assert!(k < self.n1());
        let used = self.used(state);
        let n2 = self.g2.node_count();
        let mut out = Vec::with_capacity(n2 + 1);
        for target in (0..n2).filter(|&t| !used[t]).map(Some).chain([None]) {
            let mut g = state.g;
            g += match target {
                Some(t) => usize::from(self.g1.label(k) != self.g2.label(t)),
                None => 1,
            };
            for (p, &tp) in state.assigned.iter().enumerate() {
                let e1 = self.adj1[k][p];
                let e2 = match target {
                    Some(t) if tp != DELETED => self.adj2[t][tp as usize],
                    _ => false,
                };
                g += usize::from(e1 != e2);
            }
            let mut assigned = state.assigned.clone();
            assigned.push(target.map_or(DELETED, |t| t as u32));
            let child = State { assigned, g };
            let mut child_used = used.clone();
            if let Some(t) = target {
                child_used[t] = true;
            }
            let f = if k + 1 == self.n1() {
                let total = child.g + self.completion_cost(&child_used);
                let child = State { g: total, ..child };
                out.push((child, total));
                continue;
            } else {
                child.g + self.heuristic(&child, &child_used)
            };
            out.push((child, f));
        }
        out
    }

    fn empty_source_cost(&self) -> usize {
        self.g2.node_count() + self.g2.edge_count()
    }
}

fn substitutions(state: &State) -> Vec<(usize, usize)> {
    state
        .assigned
        .iter()
        .enumerate()
        .filter(|(_, &t)| t != DELETED)
        .map(|(u, &t)| (u, t as usize))
        .collect()
}

struct Open {
    f: usize,
    seq: u64,
    state: State,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // BinaryHeap pops the maximum: lowest f, then deepest, then oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        Reverse(self.f)
            .cmp(&Reverse(other.f))
            .then(self.state.assigned.len().cmp(&other.state.assigned.len()))
            .then(Reverse(self.seq).cmp(&Reverse(other.seq)))
    }
}

/// Exact GED by A* over partial node assignments.
pub fn ged_astar(g1: &Graph, g2: &Graph, time_budget: Duration) -> Result<OracleResult> {
    if g1.is_empty() || g2.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let start = Instant::now();
    let space = Space::new(g1, g2);
    let mut open = BinaryHeap::new();
    let root = space.root();
    let root_f = space.heuristic(&root, &space.used(&root));
    open.push(Open {
        f: root_f,
        seq: 0,
        state: root,
    });
    let mut seq = 1u64;
    let mut best_bound = 0;
    let mut pops = 0u64;
    while let Some(Open { f, state, .. }) = open.pop() {
        best_bound = best_bound.max(f);
        pops += 1;
        if pops.is_multiple_of(256) && start.elapsed() >= time_budget {
            return Err(Error::BudgetExceeded {
                budget_secs: time_budget.as_secs_f64(),
                best_bound,
            });
        }
        if state.assigned.len() == space.n1() {
            return Ok(OracleResult {
                value: state.g,
                provenance: Provenance::Exact,
                mapping: Some(substitutions(&state)),
                elapsed: start.elapsed(),
            });
        }
        for (child, f) in space.children(&state) {
            open.push(Open {
                f,
                seq,
                state: child,
            });
            seq += 1;
        }
    }
    unreachable!("the search space always contains a complete edit path")
}

/// Beam-limited version of the A* search: at most `width` partial paths
/// survive per depth. Always an upper bound on the exact GED.
///
/// Beams are nested: the beam of width `w` is the beam of width `w - 1`
/// plus the best remaining child of the first `w` parents, so widening the
/// beam never loses a path and the result is non-increasing in `width`.
pub fn ged_beam(g1: &Graph, g2: &Graph, width: usize) -> Result<OracleResult> {
    if width == 0 {
        return Err(Error::invalid("beam width must be at least 1"));
    }
    let start = Instant::now();
    let space = Space::new(g1, g2);
    if space.n1() == 0 {
        return Ok(OracleResult {
            value: space.empty_source_cost(),
            provenance: Provenance::Beam,
            mapping: Some(Vec::new()),
            elapsed: start.elapsed(),
        });
    }
    let mut level = vec![space.root()];
    for _ in 0..space.n1() {
        let mut candidates: BinaryHeap<Reverse<(usize, u64, usize)>> = BinaryHeap::new();
        let mut pool: Vec<State> = Vec::new();
        let mut next = Vec::with_capacity(width.min(level.len() * (g2.node_count() + 1)));
        for w in 0..width {
            if let Some(parent) = level.get(w) {
                for (child, f) in space.children(parent) {
                    let id = pool.len();
                    candidates.push(Reverse((f, id as u64, id)));
                    pool.push(child);
                }
            }
            match candidates.pop() {
                Some(Reverse((_, _, id))) => next.push(std::mem::replace(
                    &mut pool[id],
                    State {
                        assigned: Vec::new(),
                        g: 0,
                    },
                )),
                None => break,
            }
        }
        level = next;
    }
    let best = level
        .into_iter()
        .min_by_key(|s| s.g)
        .expect("beam keeps at least one path");
    Ok(OracleResult {
        value: best.g,
        provenance: Provenance::Beam,
        mapping: Some(substitutions(&best)),
        elapsed: start.elapsed(),
    })
}

/// Bipartite upper bound: solve the node assignment problem whose costs
/// combine node edit costs with the optimal assignment of incident edges,
/// then return the true cost of the edit path that assignment induces.
pub fn ged_hungarian(g1: &Graph, g2: &Graph) -> Result<OracleResult> {
    let start = Instant::now();
    let n1 = g1.node_count();
    let n2 = g2.node_count();
    let size = n1 + n2;
    // Larger than any real edit path, still finite for the solver.
    let forbidden = (size * size + g1.edge_count() + g2.edge_count() + 1) as f64 * 4.0;
    // Prefers the identity correspondence among equal-cost assignments;
    // the total perturbation stays far below one unit of cost.
    let tie = 1.0 / (4.0 * (size * size + 1) as f64);

    let mut cost = vec![vec![0.0; size]; size];
    for (i, row) in cost.iter_mut().enumerate() {
        for (j, c) in row.iter_mut().enumerate() {
            *c = match (i < n1, j < n2) {
                (true, true) => {
                    let sub = usize::from(g1.label(i) != g2.label(j))
                        + g1.degree(i).abs_diff(g2.degree(j));
                    sub as f64 + if i == j { 0.0 } else { tie }
                }
                (true, false) if j - n2 == i => (1 + g1.degree(i)) as f64,
                (false, true) if i - n1 == j => (1 + g2.degree(j)) as f64,
                (false, false) => 0.0,
                _ => forbidden,
            };
        }
    }
    let (assignment, _) = hungarian_assignment(&cost)?;
    let mapping: Vec<Option<usize>> = (0..n1)
        .map(|i| (assignment[i] < n2).then_some(assignment[i]))
        .collect();
    let value = edit_path_cost(g1, g2, &mapping)?;
    Ok(OracleResult {
        value,
        provenance: Provenance::Hungarian,
        mapping: Some(
            mapping
                .iter()
                .enumerate()
                .filter_map(|(u, m)| m.map(|v| (u, v)))
                .collect(),
        ),
        elapsed: start.elapsed(),
    })
}

/// Exact A* within the budget; otherwise the smaller of the beam and
/// bipartite bounds, tagged [`Provenance::FallbackMin`].
pub fn label_ged(
    g1: &Graph,
    g2: &Graph,
    time_budget: Duration,
    beam_width: usize,
) -> Result<OracleResult> {
    let start = Instant::now();
    match ged_astar(g1, g2, time_budget) {
        Ok(r) => Ok(r),
        Err(Error::BudgetExceeded { .. }) => {
            let beam = ged_beam(g1, g2, beam_width)?;
            let hung = ged_hungarian(g1, g2)?;
            let best = if hung.value < beam.value { hung } else { beam };
            Ok(OracleResult {
                provenance: Provenance::FallbackMin,
                elapsed: start.elapsed(),
                ..best
            })
        }
        Err(e) => Err(e),
    }
}
