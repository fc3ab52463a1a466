//! Synthetic BA datasets, splits, pair construction and label caching.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Label};
use crate::oracle::{
    self, ged_beam, ged_hungarian, label_ged, mcs_exact, McsOptions, Provenance,
    DEFAULT_ASTAR_BUDGET, DEFAULT_BEAM_WIDTH,
};

pub use crate::graph::{load_graphs, save_graphs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mcs,
    Ged,
    Class,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mcs => "mcs",
            Metric::Ged => "ged",
            Metric::Class => "class",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledPair {
    pub g1_id: String,
    pub g2_id: String,
    pub label: f64,
    pub metric: Metric,
    /// Unnormalized MCS size or edit distance behind the label, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<usize>,
}

impl LabeledPair {
    pub fn new(
        g1_id: impl Into<String>,
        g2_id: impl Into<String>,
        label: f64,
        metric: Metric,
        raw: Option<usize>,
    ) -> Result<Self> {
        let pair = Self {
            g1_id: g1_id.into(),
            g2_id: g2_id.into(),
            label,
            metric,
            raw,
        };
        pair.validate()?;
        Ok(pair)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.metric {
            Metric::Class => self.label == 0.0 || self.label == 1.0,
            Metric::Mcs => (0.0..=1.0).contains(&self.label),
            Metric::Ged => self.label > 0.0 && self.label <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "label {} of pair ({}, {}) is outside the {} range",
                self.label,
                self.g1_id,
                self.g2_id,
                self.metric.as_str()
            )))
        }
    }
}

pub fn load_pairs(path: impl AsRef<Path>) -> Result<Vec<LabeledPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            msg,
        };
        let pair: LabeledPair = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        pair.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(pair);
    }
    Ok(out)
}

pub fn save_pairs(path: impl AsRef<Path>, pairs: &[LabeledPair]) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::new();
    for p in pairs {
        text.push_str(&serde_json::to_string(p)?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Mutable edge list used while growing or editing graphs.
#[derive(Debug, Clone)]
struct Builder {
    labels: Vec<Label>,
    adj: Vec<Vec<usize>>,
}

impl Builder {
    fn from_graph(g: &Graph) -> Self {
        Self {
            labels: g.labels().to_vec(),
            adj: (0..g.node_count()).map(|i| g.neighbors(i).to_vec()).collect(),
        }
    }

    fn len(&self) -> usize {
        self.labels.len()
    }

    fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].contains(&v)
    }

    fn add_node(&mut self, label: Label) -> usize {
        self.labels.push(label);
        self.adj.push(Vec::new());
        self.labels.len() - 1
    }

    fn add_edge(&mut self, u: usize, v: usize) {
        self.adj[u].push(v);
        self.adj[v].push(u);
    }

    fn remove_node(&mut self, node: usize) {
        self.labels.remove(node);
        self.adj.remove(node);
        for list in &mut self.adj {
            list.retain(|&x| x != node);
            for x in list.iter_mut() {
                if *x > node {
                    *x -= 1;
                }
            }
        }
    }

    fn build(self, id: impl Into<String>) -> Result<Graph> {
        let edges: Vec<(usize, usize)> = self
            .adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| u < v).map(move |&v| (u, v)))
            .collect();
        Graph::new(id, self.labels, edges)
    }
}

/// Barabási–Albert preferential attachment. Without a core the process
/// starts from the complete graph on `attach_m + 1` nodes; with a core, new
/// nodes attach to the core-seeded graph. Each new node links to
/// `min(attach_m, existing)` distinct nodes drawn with probability
/// proportional to degree (uniformly while every degree is zero). New
/// nodes carry label 0.
pub fn ba_graph(n_nodes: usize, attach_m: usize, core: Option<&Graph>, seed: u64) -> Result<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ba_graph_with(n_nodes, attach_m, core, &mut rng, |_| 0)
}

/// [`ba_graph`] driven by a caller's RNG, labeling new nodes with `label`.
pub fn ba_graph_with<R: Rng>(
    n_nodes: usize,
    attach_m: usize,
    core: Option<&Graph>,
    rng: &mut R,
    mut label: impl FnMut(&mut R) -> Label,
) -> Result<Graph> {
    if attach_m == 0 {
        return Err(Error::invalid("attach_m must be at least 1"));
    }
    if n_nodes == 0 {
        return Err(Error::invalid("a BA graph needs at least one node"));
    }
    let mut b = match core {
        Some(core) => {
            if core.node_count() > n_nodes {
                return Err(Error::invalid(format!(
                    "core has {} nodes, more than the requested {n_nodes}",
                    core.node_count()
                )));
            }
            Builder::from_graph(core)
        }
        None => {
            let seed_size = (attach_m + 1).min(n_nodes);
            let mut b = Builder {
                labels: Vec::new(),
                adj: Vec::new(),
            };
            for _ in 0..seed_size {
                b.add_node(label(rng));
            }
            for u in 0..seed_size {
                for v in u + 1..seed_size {
                    b.add_edge(u, v);
                }
            }
            b
        }
    };
    let mut repeated: Vec<usize> = (0..b.len()).flat_map(|u| std::iter::repeat_n(u, b.adj[u].len())).collect();
    while b.len() < n_nodes {
        let existing = b.len();
        let k = attach_m.min(existing);
        let mut targets: Vec<usize> = Vec::with_capacity(k);
        let mut attempts = 0;
        while targets.len() < k {
            let t = if repeated.is_empty() || attempts > 64 * k {
                rng.random_range(0..existing)
            } else {
                repeated[rng.random_range(0..repeated.len())]
            };
            attempts += 1;
            if !targets.contains(&t) {
                targets.push(t);
            }
        }
        let node = b.add_node(label(rng));
        for t in targets {
            b.add_edge(node, t);
            repeated.push(node);
            repeated.push(t);
        }
    }
    b.build("")
}

/// Generator label `c / (c + (a1 + a2) / 2)`: the core is a common induced
/// subgraph of both grown graphs, so this lower-bounds their nMCS.
pub fn mcs_generator_label(core: usize, add1: usize, add2: usize) -> f64 {
    core as f64 / (core as f64 + 0.5 * (add1 + add2) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsGenParams {
    /// Inclusive range of core sizes.
    pub core_range: (usize, usize),
    /// Inclusive range of added nodes per graph.
    pub add_range: (usize, usize),
    pub count: usize,
    pub attach_m: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct McsSample {
    pub core: usize,
    pub add1: usize,
    pub add2: usize,
}

#[derive(Debug, Clone)]
pub struct McsDataset {
    /// `graphs[2i]` and `graphs[2i + 1]` belong to sample `i`.
    pub graphs: Vec<Graph>,
    pub pairs: Vec<LabeledPair>,
    pub samples: Vec<McsSample>,
}

fn check_range(name: &str, (lo, hi): (usize, usize)) -> Result<()> {
    if lo > hi {
        return Err(Error::invalid(format!("{name} ({lo}, {hi}) is empty")));
    }
    Ok(())
}

/// Core-and-grow MCS dataset. Core nodes keep indices `0..c` in both
/// graphs.
pub fn generate_ba_mcs(params: &McsGenParams) -> Result<McsDataset> {
    check_range("core_range", params.core_range)?;
    check_range("add_range", params.add_range)?;
    if params.core_range.0 < 2 {
        return Err(Error::invalid("core sizes must be at least 2"));
    }
    if params.count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut graphs = Vec::with_capacity(2 * params.count);
    let mut pairs = Vec::with_capacity(params.count);
    let mut samples = Vec::with_capacity(params.count);
    let zero = |_: &mut ChaCha8Rng| 0;
    for i in 0..params.count {
        let c = rng.random_range(params.core_range.0..=params.core_range.1);
        let a1 = rng.random_range(params.add_range.0..=params.add_range.1);
        let a2 = rng.random_range(params.add_range.0..=params.add_range.1);
        let core = ba_graph_with(c, params.attach_m, None, &mut rng, zero)?;
        let g1 = ba_graph_with(c + a1, params.attach_m, Some(&core), &mut rng, zero)?.with_id(format!("mcs{i}_1"));
        let g2 = ba_graph_with(c + a2, params.attach_m, Some(&core), &mut rng, zero)?.with_id(format!("mcs{i}_2"));
        pairs.push(LabeledPair::new(
            g1.id(),
            g2.id(),
            mcs_generator_label(c, a1, a2),
            Metric::Mcs,
            Some(c),
        )?);
        graphs.push(g1);
        graphs.push(g2);
        samples.push(McsSample { core: c, add1: a1, add2: a2 });
    }
    Ok(McsDataset { graphs, pairs, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edit {
    DeleteLeaf,
    AddLeaf,
    AddEdge,
}

impl Edit {
    /// Unit-cost edit operations the edit performs.
    pub fn cost(self) -> usize {
        match self {
            Edit::DeleteLeaf | Edit::AddLeaf => 2,
            Edit::AddEdge => 1,
        }
    }
}

/// Applies `steps` random edits, each uniformly one of the three kinds.
/// Deleting a leaf falls back to adding an edge when there is no leaf, and
/// adding an edge falls back to adding a leaf on a complete graph. Returns
/// the edits actually applied.
pub fn trim_graph<R: Rng>(g: &Graph, steps: usize, rng: &mut R) -> Result<(Graph, Vec<Edit>)> {
    let mut b = Builder::from_graph(g);
    let mut applied = Vec::with_capacity(steps);
    for _ in 0..steps {
        let mut edit = [Edit::DeleteLeaf, Edit::AddLeaf, Edit::AddEdge][rng.random_range(0..3)];
        if edit == Edit::DeleteLeaf {
            let leaves: Vec<usize> = (0..b.len()).filter(|&u| b.adj[u].len() == 1).collect();
            if leaves.is_empty() {
                edit = Edit::AddEdge;
            } else {
                b.remove_node(leaves[rng.random_range(0..leaves.len())]);
            }
        }
        if edit == Edit::AddEdge {
            let n = b.len();
            let missing: Vec<(usize, usize)> = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .filter(|&(u, v)| !b.has_edge(u, v))
                .collect();
            if missing.is_empty() {
                edit = Edit::AddLeaf;
            } else {
                let (u, v) = missing[rng.random_range(0..missing.len())];
                b.add_edge(u, v);
            }
        }
        if edit == Edit::AddLeaf {
            let n = b.len();
            let node = b.add_node(0);
            if n > 0 {
                let anchor = rng.random_range(0..n);
                b.add_edge(node, anchor);
            }
        }
        applied.push(edit);
    }
    Ok((b.build(g.id())?, applied))
}

/// How pairs are formed within a split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Pairing {
    /// Every unordered pair of distinct graphs.
    AllPairs,
    /// `count` distinct unordered pairs in total, divided between train,
    /// valid and test in the split proportions.
    Sampled { count: usize, seed: u64 },
    /// Pre-labeled pairs read from a JSON-lines file.
    Given { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GedGenParams {
    pub base_nodes: usize,
    /// Samples per collection; the dataset holds `2 * count` graphs.
    pub count: usize,
    pub attach_m: usize,
    pub seed: u64,
    pub beam_width: usize,
    pub pairing: Pairing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GedSample {
    /// 0 or 1, the base graph the sample was edited from.
    pub base: usize,
    pub steps: usize,
    /// Unit-cost edit operations applied to the base.
    pub cost: usize,
}

#[derive(Debug, Clone)]
pub struct GedDataset {
    pub bases: [Graph; 2],
    pub base_distance: usize,
    pub graphs: Vec<Graph>,
    pub samples: Vec<GedSample>,
    pub pairs: Vec<LabeledPair>,
}

/// Distance label of a generated pair: the path bound through the base
/// graphs unless an approximate solver found something shorter.
pub fn ged_min_rule(path_bound: usize, beam: usize, hungarian: usize) -> usize {
    path_bound.min(beam.min(hungarian))
}

/// Two BA base graphs, `count` edited copies of each with the step count
/// rising by one every ten samples (cycling through 1..=10), and pairs
/// labeled by [`ged_min_rule`].
pub fn generate_ba_ged(params: &GedGenParams) -> Result<GedDataset> {
    if params.base_nodes < 3 {
        return Err(Error::invalid("base graphs need at least 3 nodes"));
    }
    if params.count == 0 {
        return Err(Error::invalid("count must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let zero = |_: &mut ChaCha8Rng| 0;
    let b1 = ba_graph_with(params.base_nodes, params.attach_m, None, &mut rng, zero)?.with_id("base1");
    let b2 = ba_graph_with(params.base_nodes, params.attach_m, None, &mut rng, zero)?.with_id("base2");
    let mut graphs = Vec::with_capacity(2 * params.count);
    let mut samples = Vec::with_capacity(2 * params.count);
    let mut per_base: [Vec<(Graph, GedSample)>; 2] = [Vec::new(), Vec::new()];
    for i in 0..params.count {
        let steps = (i / 10) % 10 + 1;
        for (k, base) in [&b1, &b2].into_iter().enumerate() {
            let (g, edits) = trim_graph(base, steps, &mut rng)?;
            let sample = GedSample {
                base: k,
                steps,
                cost: edits.iter().map(|e| e.cost()).sum(),
            };
            per_base[k].push((g.with_id(format!("ged{}_{i}", ["a", "b"][k])), sample));
        }
    }
    for (g, s) in per_base.into_iter().flatten() {
        graphs.push(g);
        samples.push(s);
    }
    let base_distance = ged_beam(&b1, &b2, params.beam_width)?
        .value
        .min(ged_hungarian(&b1, &b2)?.value);

    let mut ds = GedDataset {
        bases: [b1, b2],
        base_distance,
        graphs,
        samples,
        pairs: Vec::new(),
    };
    let index: Vec<usize> = (0..ds.graphs.len()).collect();
    let pair_indices = match &params.pairing {
        Pairing::AllPairs => all_pairs(&index),
        Pairing::Sampled { count, seed } => sample_pairs(&index, *count, *seed),
        Pairing::Given { .. } => {
            return Err(Error::invalid("generated GED data cannot use given pairs"))
        }
    };
    ds.pairs = pair_indices
        .into_iter()
        .map(|(i, j)| ds.label_pair(i, j, params.beam_width))
        .collect::<Result<_>>()?;
    Ok(ds)
}

impl GedDataset {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.graphs.iter().position(|g| g.id() == id)
    }

    /// Label of graphs `i` and `j` under [`ged_min_rule`]. The path bound
    /// goes through the shared base, or through both bases and their
    /// distance when the graphs come from different bases.
    pub fn label_pair(&self, i: usize, j: usize, beam_width: usize) -> Result<LabeledPair> {
        let (gi, gj) = (&self.graphs[i], &self.graphs[j]);
        let (si, sj) = (self.samples[i], self.samples[j]);
        let ged = if gi.same_structure(gj) {
            0
        } else {
            let bound = si.cost + sj.cost + if si.base == sj.base { 0 } else { self.base_distance };
            let beam = ged_beam(gi, gj, beam_width)?.value;
            let hung = ged_hungarian(gi, gj)?.value;
            ged_min_rule(bound, beam, hung)
        };
        LabeledPair::new(gi.id(), gj.id(), oracle::nged(gi, gj, ged as f64), Metric::Ged, Some(ged))
    }
}

/// Parameters of the desk-scale labeled MCS pool: `families` BA cores with
/// random node labels, each grown into `per_family` graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeskPoolParams {
    pub families: usize,
    pub per_family: usize,
    pub core_range: (usize, usize),
    pub add_range: (usize, usize),
    pub label_count: u32,
    pub attach_m: usize,
    pub seed: u64,
}

impl Default for DeskPoolParams {
    fn default() -> Self {
        Self {
            families: 10,
            per_family: 50,
            core_range: (2, 12),
            add_range: (0, 3),
            label_count: 4,
            attach_m: 1,
            seed: 7,
        }
    }
}

pub fn generate_desk_pool(params: &DeskPoolParams) -> Result<Vec<Graph>> {
    check_range("core_range", params.core_range)?;
    check_range("add_range", params.add_range)?;
    if params.core_range.0 < 2 || params.label_count == 0 {
        return Err(Error::invalid("desk pool needs cores of at least 2 nodes and one label"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let labels = params.label_count;
    let pick = move |r: &mut ChaCha8Rng| r.random_range(0..labels);
    let mut out = Vec::with_capacity(params.families * params.per_family);
    for f in 0..params.families {
        let c = rng.random_range(params.core_range.0..=params.core_range.1);
        let core = ba_graph_with(c, params.attach_m, None, &mut rng, pick)?;
        for k in 0..params.per_family {
            let a = rng.random_range(params.add_range.0..=params.add_range.1);
            let g = ba_graph_with(c + a, params.attach_m, Some(&core), &mut rng, pick)?;
            out.push(g.with_id(format!("desk{f}_{k}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Valid, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

fn split_counts(n: usize, fractions: (f64, f64, f64)) -> Result<[usize; 3]> {
    let (a, b, c) = fractions;
    let total = a + b + c;
    if [a, b, c].iter().any(|f| !(f.is_finite() && *f >= 0.0)) || total <= 0.0 {
        return Err(Error::invalid("split fractions must be non-negative and not all zero"));
    }
    let train = ((n as f64) * a / total).round() as usize;
    let valid = (((n as f64) * b / total).round() as usize).min(n - train.min(n));
    let train = train.min(n);
    Ok([train, valid, n - train - valid])
}

/// Deterministic shuffle of `ids` split by `fractions` (train, valid,
/// test). Counts are rounded; the test split takes the remainder.
pub fn split_dataset(
    ids: &[String],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    let unique: HashSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::invalid("graph ids are not unique"));
    }
    let counts = split_counts(ids.len(), fractions)?;
    let mut order: Vec<&String> = ids.iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = BTreeMap::new();
    let mut it = order.into_iter();
    for (split, count) in Split::ALL.into_iter().zip(counts) {
        for id in it.by_ref().take(count) {
            out.insert(id.clone(), split);
        }
    }
    Ok(out)
}

/// Split assignment that keeps groups together, e.g. the two graphs of a
/// generated sample.
pub fn split_groups(
    groups: &[Vec<String>],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<BTreeMap<String, Split>> {
    let keys: Vec<String> = (0..groups.len()).map(|i| i.to_string()).collect();
    let by_group = split_dataset(&keys, fractions, seed)?;
    let mut out = BTreeMap::new();
    for (i, group) in groups.iter().enumerate() {
        for id in group {
            if out.insert(id.clone(), by_group[&i.to_string()]).is_some() {
                return Err(Error::invalid(format!("graph {id} appears in two groups")));
            }
        }
    }
    Ok(out)
}

fn all_pairs<T: Clone>(items: &[T]) -> Vec<(T, T)> {
    let mut out = Vec::new();
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            out.push((items[i].clone(), items[j].clone()));
        }
    }
    out
}

/// Up to `count` distinct unordered pairs of distinct items, in draw order.
fn sample_pairs<T: Clone>(items: &[T], count: usize, seed: u64) -> Vec<(T, T)> {
    let n = items.len();
    let possible = n * n.saturating_sub(1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if count >= possible {
        let mut all = all_pairs(items);
        all.shuffle(&mut rng);
        return all;
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let i = rng.random_range(0..n);
        let j = rng.random_range(0..n);
        if i != j && seen.insert((i.min(j), i.max(j))) {
            out.push((items[i].clone(), items[j].clone()));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Synthetic,
    Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub metric: Metric,
    /// Graph file, relative to the manifest's directory unless absolute.
    pub graphs: PathBuf,
    pub splits: BTreeMap<String, Split>,
    pub pairing: Pairing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_cache: Option<PathBuf>,
    pub source: Source,
}

impl DatasetManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        let dir = path.parent().unwrap_or(Path::new(""));
        m.graphs = dir.join(&m.graphs);
        if let Some(cache) = &m.label_cache {
            m.label_cache = Some(dir.join(cache));
        }
        if let Pairing::Given { path: p } = &m.pairing {
            m.pairing = Pairing::Given { path: dir.join(p) };
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Checks that the split assignment covers exactly the given ids.
    pub fn check_splits<'a>(&self, ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
        let mut seen = 0;
        for id in ids {
            if !self.splits.contains_key(id) {
                return Err(Error::invalid(format!("graph {id} has no split")));
            }
            seen += 1;
        }
        if seen != self.splits.len() {
            return Err(Error::invalid("split assignment names graphs missing from the graph file"));
        }
        Ok(())
    }

    pub fn ids_in(&self, split: Split) -> Vec<String> {
        self.splits
            .iter()
            .filter(|(_, s)| **s == split)
            .map(|(id, _)| id.clone())
            .collect()
    }
}

/// Unlabeled pairs per split (train, valid, test). `Given` pairing is
/// handled by [`Dataset::open`] since those pairs already carry labels.
pub fn make_pairs(manifest: &DatasetManifest) -> Result<[Vec<(String, String)>; 3]> {
    match &manifest.pairing {
        Pairing::AllPairs => Ok(Split::ALL.map(|s| all_pairs(&manifest.ids_in(s)))),
        Pairing::Sampled { count, seed } => {
            let counts = split_counts(*count, DEFAULT_FRACTIONS)?;
            let mut k = 0;
            Ok(Split::ALL.map(|s| {
                k += 1;
                sample_pairs(&manifest.ids_in(s), counts[k - 1], seed.wrapping_add(k as u64))
            }))
        }
        Pairing::Given { .. } => Err(Error::invalid("given pairs are already labeled")),
    }
}

/// Every test graph against every test graph, including itself, grouped
/// by query.
pub fn query_pairs(ids: &[String]) -> Vec<(String, Vec<String>)> {
    ids.iter().map(|q| (q.clone(), ids.to_vec())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub time_budget: Duration,
    pub beam_width: usize,
    /// Worker threads for labeling; results do not depend on it.
    pub jobs: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            time_budget: DEFAULT_ASTAR_BUDGET,
            beam_width: DEFAULT_BEAM_WIDTH,
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CacheEntry {
    g1: String,
    g2: String,
    metric: Metric,
    value: usize,
    provenance: Provenance,
}

/// Oracle results keyed by unordered id pair and metric, persisted as
/// JSON lines and appended to as new pairs are labeled.
#[derive(Debug, Default)]
pub struct LabelCache {
    path: Option<PathBuf>,
    entries: HashMap<(String, String, Metric), (usize, Provenance)>,
}

fn cache_key(a: &str, b: &str, metric: Metric) -> (String, String, Metric) {
    if a <= b {
        (a.to_string(), b.to_string(), metric)
    } else {
        (b.to_string(), a.to_string(), metric)
    }
}

impl LabelCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut entries = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let e: CacheEntry = serde_json::from_str(line).map_err(|err| Error::Parse {
                    path: path.clone(),
                    line: i + 1,
                    msg: err.to_string(),
                })?;
                entries.insert(cache_key(&e.g1, &e.g2, e.metric), (e.value, e.provenance));
            }
        }
        Ok(Self {
            path: Some(path),
            entries,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, a: &str, b: &str, metric: Metric) -> Option<(usize, Provenance)> {
        self.entries.get(&cache_key(a, b, metric)).copied()
    }

    fn insert_all(&mut self, new: Vec<CacheEntry>) -> Result<()> {
        if new.is_empty() {
            return Ok(());
        }
        if let Some(path) = &self.path {
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            let mut text = String::new();
            for e in &new {
                text.push_str(&serde_json::to_string(e)?);
                text.push('\n');
            }
            f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        for e in new {
            self.entries.insert(cache_key(&e.g1, &e.g2, e.metric), (e.value, e.provenance));
        }
        Ok(())
    }
}

/// Raw oracle value for one pair: MCS size, or the exact-or-bounded edit
/// distance.
pub fn oracle_value(g1: &Graph, g2: &Graph, metric: Metric, options: OracleOptions) -> Result<(usize, Provenance)> {
    match metric {
        Metric::Mcs => {
            let r = mcs_exact(
                g1,
                g2,
                McsOptions {
                    respect_labels: true,
                    time_budget: options.time_budget,
                },
            )?;
            Ok((r.value, r.provenance))
        }
        Metric::Ged => {
            let r = label_ged(g1, g2, options.time_budget, options.beam_width)?;
            Ok((r.value, r.provenance))
        }
        Metric::Class => Err(Error::invalid("classification labels cannot be computed by an oracle")),
    }
}

/// Labels pairs with normalized oracle similarities, consulting and
/// extending the cache. Uncached pairs are computed on `options.jobs`
/// threads.
pub fn label_pairs(
    pairs: &[(String, String)],
    graphs: &HashMap<String, Graph>,
    metric: Metric,
    options: OracleOptions,
    cache: &mut LabelCache,
) -> Result<Vec<LabeledPair>> {
    let lookup = |id: &str| {
        graphs
            .get(id)
            .ok_or_else(|| Error::invalid(format!("unknown graph id {id}")))
    };
    let mut missing: Vec<(&String, &String)> = Vec::new();
    let mut queued = HashSet::new();
    for (a, b) in pairs {
        lookup(a)?;
        lookup(b)?;
        if cache.get(a, b, metric).is_none() && queued.insert(cache_key(a, b, metric)) {
            missing.push((a, b));
        }
    }
    let jobs = options.jobs.max(1).min(missing.len().max(1));
    let computed: Vec<Result<(usize, Provenance)>> = if jobs == 1 {
        missing
            .iter()
            .map(|(a, b)| oracle_value(&graphs[*a], &graphs[*b], metric, options))
            .collect()
    } else {
        let mut slots: Vec<Option<Result<(usize, Provenance)>>> = (0..missing.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..jobs)
                .map(|w| {
                    let missing = &missing;
                    scope.spawn(move || {
                        (w..missing.len())
                            .step_by(jobs)
                            .map(|i| {
                                let (a, b) = missing[i];
                                (i, oracle_value(&graphs[a], &graphs[b], metric, options))
                            })
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (i, r) in h.join().expect("labeling worker panicked") {
                    slots[i] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every slot filled")).collect()
    };
    let mut fresh = Vec::with_capacity(missing.len());
    for ((a, b), r) in missing.iter().zip(computed) {
        let (value, provenance) = r?;
        fresh.push(CacheEntry {
            g1: (*a).clone(),
            g2: (*b).clone(),
            metric,
            value,
            provenance,
        });
    }
    cache.insert_all(fresh)?;

    let mut out = Vec::with_capacity(pairs.len());
    for (a, b) in pairs {
        let (g1, g2) = (lookup(a)?, lookup(b)?);
        let (value, _) = cache.get(a, b, metric).expect("labeled above");
        let label = match metric {
            Metric::Mcs => oracle::nmcs(g1, g2, value),
            _ => oracle::nged(g1, g2, value as f64),
        };
        out.push(LabeledPair::new(a, b, label, metric, Some(value))?);
    }
    Ok(out)
}

/// A dataset with graphs loaded and every split's pairs labeled.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub graphs: HashMap<String, Graph>,
    pub train: Vec<LabeledPair>,
    pub valid: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

impl Dataset {
    pub fn open(manifest_path: impl AsRef<Path>, options: OracleOptions) -> Result<Self> {
        let manifest = DatasetManifest::load(manifest_path)?;
        Self::from_manifest(manifest, options)
    }

    pub fn from_manifest(manifest: DatasetManifest, options: OracleOptions) -> Result<Self> {
        let list = load_graphs(&manifest.graphs)?;
        manifest.check_splits(list.iter().map(|g| g.id()))?;
        let graphs: HashMap<String, Graph> = list.into_iter().map(|g| (g.id().to_string(), g)).collect();
        let [train, valid, test] = match &manifest.pairing {
            Pairing::Given { path } => {
                let mut by_split: [Vec<LabeledPair>; 3] = Default::default();
                for p in load_pairs(path)? {
                    let s1 = manifest.splits.get(&p.g1_id);
                    let s2 = manifest.splits.get(&p.g2_id);
                    match (s1, s2) {
                        (Some(a), Some(b)) if a == b => {
                            by_split[*a as usize].push(p);
                        }
                        (Some(_), Some(_)) => {}
                        _ => {
                            return Err(Error::invalid(format!(
                                "pair ({}, {}) names an unknown graph",
                                p.g1_id, p.g2_id
                            )))
                        }
                    }
                }
                by_split
            }
            _ => {
                let mut cache = match &manifest.label_cache {
                    Some(p) => LabelCache::open(p)?,
                    None => LabelCache::in_memory(),
                };
                let [tr, va, te] = make_pairs(&manifest)?;
                [
                    label_pairs(&tr, &graphs, manifest.metric, options, &mut cache)?,
                    label_pairs(&va, &graphs, manifest.metric, options, &mut cache)?,
                    label_pairs(&te, &graphs, manifest.metric, options, &mut cache)?,
                ]
            }
        };
        Ok(Self {
            manifest,
            graphs,
            train,
            valid,
            test,
        })
    }

    pub fn graph(&self, id: &str) -> Result<&Graph> {
        self.graphs
            .get(id)
            .ok_or_else(|| Error::invalid(format!("unknown graph id {id}")))
    }

    pub fn pairs(&self, split: Split) -> &[LabeledPair] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn max_nodes(&self) -> usize {
        self.graphs.values().map(Graph::node_count).max().unwrap_or(0)
    }

    pub fn label_vocab_size(&self) -> usize {
        self.graphs
            .values()
            .flat_map(|g| g.labels().iter().copied())
            .max()
            .map_or(1, |l| l as usize + 1)
    }
}

/// Named generator settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Ba100,
    Ba200,
    Ba300,
    Desk,
}

impl Preset {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "ba100" => Ok(Preset::Ba100),
            "ba200" => Ok(Preset::Ba200),
            "ba300" => Ok(Preset::Ba300),
            "desk" => Ok(Preset::Desk),
            other => Err(Error::invalid(format!("unknown preset {other}"))),
        }
    }

    /// Core-and-grow settings with 40,000 samples (32,000/4,000/4,000).
    pub fn mcs_params(self, seed: u64) -> McsGenParams {
        let (core_range, add_range) = match self {
            Preset::Ba100 => ((50, 70), (30, 50)),
            Preset::Ba200 => ((100, 120), (80, 100)),
            Preset::Ba300 => ((150, 170), (130, 150)),
            Preset::Desk => ((6, 10), (1, 4)),
        };
        McsGenParams {
            core_range,
            add_range,
            count: if self == Preset::Desk { 256 } else { 40_000 },
            attach_m: 1,
            seed,
        }
    }

    pub fn ged_params(self, seed: u64) -> GedGenParams {
        let base_nodes = match self {
            Preset::Ba100 => 100,
            Preset::Ba200 => 200,
            Preset::Ba300 => 300,
            Preset::Desk => 10,
        };
        GedGenParams {
            base_nodes,
            count: 100,
            attach_m: 1,
            seed,
            beam_width: DEFAULT_BEAM_WIDTH,
            pairing: Pairing::Sampled {
                count: if self == Preset::Desk { 2_500 } else { 40_000 },
                seed,
            },
        }
    }
}
