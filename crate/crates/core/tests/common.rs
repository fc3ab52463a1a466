#![allow(dead_code)]

use infmcs::Graph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdős–Rényi style graph with `n` nodes, edge probability `p` and labels
/// drawn from `0..labels`.
pub fn random_graph(rng: &mut impl Rng, id: &str, n: usize, p: f64, labels: u32) -> Graph {
    let node_labels = (0..n).map(|_| rng.random_range(0..labels)).collect();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    Graph::new(id, node_labels, edges).unwrap()
}

/// Brute-force maximum common induced subgraph: tries every injective
/// partial map from g1 into g2 and keeps the largest label- and
/// adjacency-consistent one.
pub fn brute_force_mcs(g1: &Graph, g2: &Graph) -> usize {
    fn rec(g1: &Graph, g2: &Graph, u: usize, map: &mut Vec<Option<usize>>, used: &mut [bool], best: &mut usize) {
        if u == g1.node_count() {
            let pairs: Vec<(usize, usize)> = map
                .iter()
                .enumerate()
                .filter_map(|(a, m)| m.map(|b| (a, b)))
                .collect();
            let ok = pairs.iter().all(|&(a, b)| g1.label(a) == g2.label(b))
                && pairs.iter().all(|&(a, b)| {
                    pairs
                        .iter()
                        .all(|&(c, d)| a == c || g1.has_edge(a, c) == g2.has_edge(b, d))
                });
            if ok {
                *best = (*best).max(pairs.len());
            }
            return;
        }
        map.push(None);
        rec(g1, g2, u + 1, map, used, best);
        map.pop();
        for v in 0..g2.node_count() {
            if !used[v] {
                used[v] = true;
                map.push(Some(v));
                rec(g1, g2, u + 1, map, used, best);
                map.pop();
                used[v] = false;
            }
        }
    }
    let mut best = 0;
    rec(g1, g2, 0, &mut Vec::new(), &mut vec![false; g2.node_count()], &mut best);
    best
}

/// Brute-force GED: minimum over every way of substituting or deleting each
/// node of g1 (unused g2 nodes are inserted), with the cost of each edit
/// path counted directly from the two edge sets.
pub fn brute_force_ged(g1: &Graph, g2: &Graph) -> usize {
    fn cost(g1: &Graph, g2: &Graph, map: &[Option<usize>]) -> usize {
        let mut c = 0;
        let mut inverse = vec![None; g2.node_count()];
        for (a, m) in map.iter().enumerate() {
            match m {
                Some(b) => {
                    inverse[*b] = Some(a);
                    if g1.label(a) != g2.label(*b) {
                        c += 1;
                    }
                }
                None => c += 1,
            }
        }
        c += inverse.iter().filter(|x| x.is_none()).count();
        for a in 0..g1.node_count() {
            for b in a + 1..g1.node_count() {
                let e1 = g1.has_edge(a, b);
                let e2 = matches!((map[a], map[b]), (Some(x), Some(y)) if g2.has_edge(x, y));
                if e1 != e2 {
                    c += 1;
                }
            }
        }
        for x in 0..g2.node_count() {
            for y in x + 1..g2.node_count() {
                if g2.has_edge(x, y) && (inverse[x].is_none() || inverse[y].is_none()) {
                    c += 1;
                }
            }
        }
        c
    }
    fn rec(g1: &Graph, g2: &Graph, map: &mut Vec<Option<usize>>, used: &mut [bool], best: &mut usize) {
        if map.len() == g1.node_count() {
            *best = (*best).min(cost(g1, g2, map));
            return;
        }
        map.push(None);
        rec(g1, g2, map, used, best);
        map.pop();
        for v in 0..g2.node_count() {
            if !used[v] {
                used[v] = true;
                map.push(Some(v));
                rec(g1, g2, map, used, best);
                map.pop();
                used[v] = false;
            }
        }
    }
    let mut best = usize::MAX;
    rec(g1, g2, &mut Vec::new(), &mut vec![false; g2.node_count()], &mut best);
    best
}

/// Every permutation of `0..n` (Heap's algorithm).
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn heap(k: usize, a: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if k <= 1 {
            out.push(a.clone());
            return;
        }
        for i in 0..k {
            heap(k - 1, a, out);
            if k.is_multiple_of(2) {
                a.swap(i, k - 1);
            } else {
                a.swap(0, k - 1);
            }
        }
    }
    let mut out = Vec::new();
    heap(n, &mut (0..n).collect(), &mut out);
    out
}
