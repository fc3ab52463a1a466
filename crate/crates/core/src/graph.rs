//! Undirected node-labeled simple graphs, BFS distances, closeness
//! centrality and the centrality-based node ordering that feeds the
//! positional-encoding lookup.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Categorical node label id.
pub type Label = u32;

/// Distance reported by [`Graph::bfs_distances`] for unreachable nodes.
pub const UNREACHABLE: usize = usize::MAX;

/// An immutable undirected simple graph with one categorical label per node.
///
/// Edges are kept as canonical `(min, max)` pairs in sorted order and
/// mirrored into sorted adjacency lists, so two graphs built from the same
/// edge set compare equal regardless of input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    id: String,
    labels: Vec<Label>,
    edges: Vec<(usize, usize)>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(
        id: impl Into<String>,
        labels: Vec<Label>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let n = labels.len();
        let mut canonical = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u},{v}) has an endpoint outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop on node {u}")));
            }
            canonical.push((u.min(v), u.max(v)));
        }
        canonical.sort_unstable();
        if let Some(w) = canonical.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidGraph(format!(
                "duplicate edge ({},{})",
                w[0].0, w[0].1
            )));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in &canonical {
            adjacency[u].push(v);
            adjacency[v].push(u);
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Self {
            id: id.into(),
            labels,
            edges: canonical,
            adjacency,
        })
    }

    /// Graph with `n` nodes that all carry label 0.
    pub fn unlabeled(
        id: impl Into<String>,
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        Self::new(id, vec![0; n], edges)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label(&self, node: usize) -> Label {
        self.labels[node]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency[u].binary_search(&v).is_ok()
    }

    /// Dense boolean adjacency matrix, row-major.
    pub fn adjacency_matrix(&self) -> Vec<Vec<bool>> {
        let n = self.node_count();
        let mut m = vec![vec![false; n]; n];
        for &(u, v) in &self.edges {
            m[u][v] = true;
            m[v][u] = true;
        }
        m
    }

    /// Subgraph induced by `nodes`; node `k` of the result is `nodes[k]`.
    pub fn induced_subgraph(&self, nodes: &[usize]) -> Result<Graph> {
        let mut position = vec![usize::MAX; self.node_count()];
        for (k, &v) in nodes.iter().enumerate() {
            if v >= self.node_count() {
                return Err(Error::IndexOutOfRange {
                    index: v,
                    len: self.node_count(),
                });
            }
            if position[v] != usize::MAX {
                return Err(Error::invalid(format!("node {v} selected twice")));
            }
            position[v] = k;
        }
        let labels = nodes.iter().map(|&v| self.labels[v]).collect();
        let edges = self
            .edges
            .iter()
            .filter(|&&(u, v)| position[u] != usize::MAX && position[v] != usize::MAX)
            .map(|&(u, v)| (position[u], position[v]));
        Graph::new(self.id.clone(), labels, edges)
    }

    /// Relabels nodes so that old node `v` becomes `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.node_count();
        if perm.len() != n {
            return Err(Error::invalid("permutation length differs from node count"));
        }
        let mut labels = vec![0; n];
        let mut seen = vec![false; n];
        for (old, &new) in perm.iter().enumerate() {
            if new >= n || seen[new] {
                return Err(Error::invalid("not a permutation"));
            }
            seen[new] = true;
            labels[new] = self.labels[old];
        }
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        Graph::new(self.id.clone(), labels, edges)
    }

    /// True when both graphs have the same labels and edge set under the
    /// identity node correspondence (ids are ignored).
    pub fn same_structure(&self, other: &Graph) -> bool {
        self.labels == other.labels && self.edges == other.edges
    }

    pub fn bfs_distances(&self, source: usize) -> Result<Vec<usize>> {
        if source >= self.node_count() {
            return Err(Error::IndexOutOfRange {
                index: source,
                len: self.node_count(),
            });
        }
        let mut dist = vec![UNREACHABLE; self.node_count()];
        let mut queue = std::collections::VecDeque::new();
        dist[source] = 0;
        queue.push_back(source);
        while let Some(u) = queue.pop_front() {
            for &v in &self.adjacency[u] {
                if dist[v] == UNREACHABLE {
                    dist[v] = dist[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        Ok(dist)
    }

    /// Component-scaled closeness centrality: for a node whose connected
    /// component has `n` nodes, `((n-1)/(|V|-1)) * ((n-1)/sum_of_distances)`.
    /// Nodes in singleton components get 0.
    pub fn closeness_centrality(&self) -> Vec<f64> {
        let total = self.node_count();
        (0..total)
            .map(|v| {
                let dist = self.bfs_distances(v).expect("node in range");
                let (reach, sum) = dist
                    .iter()
                    .filter(|&&d| d != UNREACHABLE)
                    .fold((0usize, 0usize), |(c, s), &d| (c + 1, s + d));
                if reach <= 1 {
                    return 0.0;
                }
                let others = (reach - 1) as f64;
                (others / (total - 1) as f64) * (others / sum as f64)
            })
            .collect()
    }

    /// Rank of every node under descending closeness centrality. Ties go
    /// to the higher degree, then the smaller label, then the smaller index.
    pub fn node_ordering(&self) -> NodeOrdering {
        let centrality = self.closeness_centrality();
        let mut order: Vec<usize> = (0..self.node_count()).collect();
        order.sort_by(|&a, &b| {
            centrality[b]
                .total_cmp(&centrality[a])
                .then_with(|| self.degree(b).cmp(&self.degree(a)))
                .then_with(|| self.labels[a].cmp(&self.labels[b]))
                .then_with(|| a.cmp(&b))
        });
        NodeOrdering::from_order(&order)
    }

    /// Whether every node has a different closeness centrality, the case in
    /// which [`Graph::node_ordering`] commutes with node relabeling.
    pub fn has_distinct_centralities(&self) -> bool {
        let mut c = self.closeness_centrality();
        c.sort_by(f64::total_cmp);
        c.windows(2).all(|w| w[0] != w[1])
    }
}

/// Rank of each element under descending order of `values`; equal values
/// are ranked by index.
pub fn argtop_ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| match values[b].total_cmp(&values[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    NodeOrdering::from_order(&order).ranks
}

/// Permutation-invariant node positions: `ranks[v]` is the position of node
/// `v` in the centrality ordering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeOrdering {
    pub ranks: Vec<usize>,
}

impl NodeOrdering {
    fn from_order(order: &[usize]) -> Self {
        let mut ranks = vec![0; order.len()];
        for (rank, &node) in order.iter().enumerate() {
            ranks[node] = rank;
        }
        Self { ranks }
    }

    pub fn is_permutation(&self) -> bool {
        let mut seen = vec![false; self.ranks.len()];
        self.ranks.iter().all(|&r| {
            r < seen.len() && !std::mem::replace(&mut seen[r], true)
        })
    }
}

/// On-disk form of a graph, one JSON object per line.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphRecord {
    id: String,
    n: usize,
    labels: Vec<Label>,
    edges: Vec<[usize; 2]>,
}

impl From<&Graph> for GraphRecord {
    fn from(g: &Graph) -> Self {
        Self {
            id: g.id.clone(),
            n: g.node_count(),
            labels: g.labels.clone(),
            edges: g.edges.iter().map(|&(u, v)| [u, v]).collect(),
        }
    }
}

impl TryFrom<GraphRecord> for Graph {
    type Error = Error;

    fn try_from(r: GraphRecord) -> Result<Self> {
        if r.labels.len() != r.n {
            return Err(Error::InvalidGraph(format!(
                "labels has length {} but n = {}",
                r.labels.len(),
                r.n
            )));
        }
        Graph::new(r.id, r.labels, r.edges.into_iter().map(|[u, v]| (u, v)))
    }
}

impl Graph {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&GraphRecord::from(self)).expect("graph serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Graph> {
        let record: GraphRecord = serde_json::from_str(line)?;
        Graph::try_from(record)
    }
}

/// Reads a JSON-lines graph file. Blank lines are skipped; any malformed
/// record fails with its 1-based line number.
pub fn load_graphs(path: impl AsRef<Path>) -> Result<Vec<Graph>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut graphs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let graph = Graph::from_json_line(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg: e.to_string(),
        })?;
        graphs.push(graph);
    }
    Ok(graphs)
}

pub fn save_graphs(path: impl AsRef<Path>, graphs: &[Graph]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for g in graphs {
        writeln!(out, "{}", g.to_json_line()).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Graph {
        Graph::unlabeled("p3", 3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn rejects_self_loops_duplicates_and_bad_endpoints() {
        assert!(Graph::unlabeled("g", 2, [(0, 0)]).is_err());
        assert!(Graph::unlabeled("g", 2, [(0, 1), (1, 0)]).is_err());
        assert!(Graph::unlabeled("g", 2, [(0, 2)]).is_err());
    }

    #[test]
    fn bfs_examples() {
        assert_eq!(path3().bfs_distances(0).unwrap(), vec![0, 1, 2]);
        let single = Graph::unlabeled("s", 1, []).unwrap();
        assert_eq!(single.bfs_distances(0).unwrap(), vec![0]);
        let pair = Graph::unlabeled("d", 2, []).unwrap();
        assert_eq!(pair.bfs_distances(0).unwrap(), vec![0, UNREACHABLE]);
        assert!(matches!(
            path3().bfs_distances(3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn closeness_examples() {
        let c = path3().closeness_centrality();
        assert!((c[0] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(c[1], 1.0);
        assert!((c[2] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            Graph::unlabeled("s", 1, []).unwrap().closeness_centrality(),
            vec![0.0]
        );
        let tri = Graph::unlabeled("t", 3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(tri.closeness_centrality(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn closeness_scales_by_component() {
        // component {0,1,2} path plus isolated node 3
        let g = Graph::unlabeled("g", 4, [(0, 1), (1, 2)]).unwrap();
        let c = g.closeness_centrality();
        assert!((c[1] - (2.0 / 3.0) * 1.0).abs() < 1e-15);
        assert!((c[0] - (2.0 / 3.0) * (2.0 / 3.0)).abs() < 1e-15);
        assert_eq!(c[3], 0.0);
    }

    #[test]
    fn ordering_examples() {
        assert_eq!(argtop_ranks(&[0.4, 0.6, 0.1, 0.9]), vec![2, 1, 3, 0]);
        let tri = Graph::unlabeled("t", 3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(tri.node_ordering().ranks, vec![0, 1, 2]);
        let star = Graph::unlabeled("k13", 4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(star.node_ordering().ranks, vec![0, 1, 2, 3]);
        let star2 = Graph::unlabeled("k13", 4, [(2, 0), (2, 1), (2, 3)]).unwrap();
        assert_eq!(star2.node_ordering().ranks, vec![1, 2, 0, 3]);
    }

    #[test]
    fn ordering_breaks_ties_by_degree_then_label() {
        // Two isolated nodes (centrality 0) and an edge; isolated ones tie on
        // centrality and degree, so the smaller label wins.
        let g = Graph::new("g", vec![5, 1, 0, 0], [(2, 3)]).unwrap();
        assert_eq!(g.node_ordering().ranks, vec![3, 2, 0, 1]);
    }

    #[test]
    fn induced_subgraph_and_permutation() {
        let g = Graph::new("g", vec![0, 1, 2, 3], [(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let sub = g.induced_subgraph(&[3, 0, 1]).unwrap();
        assert_eq!(sub.labels(), &[3, 0, 1]);
        assert_eq!(sub.edges(), &[(0, 1), (1, 2)]);
        let p = g.permuted(&[1, 2, 3, 0]).unwrap();
        assert_eq!(p.labels(), &[3, 0, 1, 2]);
        assert!(p.has_edge(1, 2) && p.has_edge(0, 1));
        assert!(g.permuted(&[0, 0, 1, 2]).is_err());
    }

    #[test]
    fn json_line_round_trip_is_exact() {
        let line = r#"{"id":"a","n":3,"labels":[1,0,2],"edges":[[0,1],[1,2]]}"#;
        let g = Graph::from_json_line(line).unwrap();
        assert_eq!(g.to_json_line(), line);
        assert!(Graph::from_json_line(r#"{"id":"a","n":2,"labels":[1],"edges":[]}"#).is_err());
        assert!(Graph::from_json_line(r#"{"id":"a","n":1,"labels":[1],"edges":[],"x":1}"#).is_err());
    }

    #[test]
    fn load_reports_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"n\":1,\"labels\":[0],\"edges\":[]}\n\n{\"id\":\"b\",\"n\":1}\n",
        )
        .unwrap();
        match load_graphs(&path) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
