//! The similarity model: label embedding, a GCN stack, centrality-ranked
//! positional encodings, a transformer encoder, and a cross-graph soft
//! matcher whose per-node matching scores sum to an implicit MCS size.

use std::cmp::Ordering;
use std::fs;
use std::path::Path;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Propagation, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub gcn_layers: usize,
    pub transformer_layers: usize,
    pub heads: usize,
    /// Rows of the positional-encoding dictionary; must exceed the largest
    /// graph the model will see.
    pub pe_dict_size: usize,
    /// Initial temperature, in `(0, 1)`.
    pub tau_init: f64,
    pub mlp_hidden_dim: usize,
    pub label_vocab_size: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 128,
            gcn_layers: 3,
            transformer_layers: 2,
            heads: 8,
            pe_dict_size: 32,
            tau_init: 0.5,
            mlp_hidden_dim: 128,
            label_vocab_size: 1,
        }
    }
}

impl ModelConfig {
    /// Default configuration sized for a dataset: the dictionary gets 16
    /// spare rows beyond the largest graph.
    pub fn for_dataset(max_nodes: usize, label_vocab_size: usize) -> Self {
        Self {
            pe_dict_size: max_nodes + 16,
            label_vocab_size: label_vocab_size.max(1),
            ..Self::default()
        }
    }

    pub fn with_hidden_dim(mut self, d: usize) -> Self {
        self.hidden_dim = d;
        self.mlp_hidden_dim = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("heads", self.heads),
            ("pe_dict_size", self.pe_dict_size),
            ("mlp_hidden_dim", self.mlp_hidden_dim),
            ("label_vocab_size", self.label_vocab_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::invalid(format!(
                "hidden_dim {} is not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        if !(self.tau_init > 0.0 && self.tau_init < 1.0) {
            return Err(Error::invalid("tau_init must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Regression,
    Classification,
}

#[derive(Debug, Clone, Copy)]
struct GcnLayer {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    wq: usize,
    wk: usize,
    wv: usize,
    wo: usize,
    ln_gain: usize,
    ln_bias: usize,
    ffn_w1: usize,
    ffn_b1: usize,
    ffn_w2: usize,
    ffn_b2: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    embedding: usize,
    gcn: Vec<GcnLayer>,
    pe: usize,
    encoder: Vec<EncoderLayer>,
    mlp_w1: usize,
    mlp_b1: usize,
    mlp_w2: usize,
    mlp_b2: usize,
    theta: usize,
}

/// Learnable weights, addressed by index; names are only used for
/// checkpoints and reports.
#[derive(Debug, Clone)]
pub struct ModelParams {
    names: Vec<String>,
    values: Vec<Rc<Tensor>>,
}

impl ModelParams {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.values[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        Rc::make_mut(&mut self.values[i])
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|t| t.len()).sum()
    }

    fn push(&mut self, name: String, t: Tensor) -> usize {
        self.names.push(name);
        self.values.push(Rc::new(t));
        self.values.len() - 1
    }
}

/// All parameters of one forward pass placed on a tape.
pub struct Bound<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> Bound<'t> {
    /// Parameters supplied by the caller, in [`ModelParams`] order.
    pub fn from_vars(vars: Vec<Var<'t>>) -> Self {
        Self { vars }
    }

    pub fn var(&self, i: usize) -> Var<'t> {
        self.vars[i]
    }

    /// Gradients of every parameter after `backward`, zero where a
    /// parameter did not take part.
    pub fn grads(&self, params: &ModelParams) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(&params.values)
            .map(|(v, p)| v.grad().unwrap_or_else(|| Tensor::zeros(p.shape())))
            .collect()
    }
}

/// Per-graph structure the forward pass needs: label ids, centrality
/// ranks and the GCN propagation weights.
pub struct GraphInputs {
    labels: Vec<usize>,
    ranks: Vec<usize>,
    propagation: Rc<Propagation>,
}

impl GraphInputs {
    pub fn new(g: &Graph) -> Result<Self> {
        if g.is_empty() {
            return Err(Error::EmptyGraph);
        }
        Ok(Self {
            labels: g.labels().iter().map(|&l| l as usize).collect(),
            ranks: g.node_ordering().ranks,
            propagation: Rc::new(gcn_propagation(g)),
        })
    }
}

/// Symmetric-normalized neighborhood with self loops:
/// `w_ij = 1 / sqrt((deg_i + 1)(deg_j + 1))` for `j` in `N(i) ∪ {i}`.
pub fn gcn_propagation(g: &Graph) -> Propagation {
    let d: Vec<f64> = (0..g.node_count()).map(|i| (g.degree(i) + 1) as f64).collect();
    let rows = (0..g.node_count())
        .map(|i| {
            let mut row: Vec<(usize, f64)> = g
                .neighbors(i)
                .iter()
                .chain(std::iter::once(&i))
                .map(|&j| (j, 1.0 / (d[i] * d[j]).sqrt()))
                .collect();
            row.sort_by_key(|&(j, _)| j);
            row
        })
        .collect();
    Propagation::new(rows).expect("neighbors are in range")
}

/// One graph convolution: `ReLU(sum_j w_ij * x_j W + b)`.
pub fn gcn_layer<'t>(
    x: Var<'t>,
    propagation: &Rc<Propagation>,
    w: Var<'t>,
    b: Var<'t>,
) -> Result<Var<'t>> {
    Ok(x.matmul(w)?.neighbor_sum(propagation)?.add(b)?.relu())
}

/// Soft cross-graph correspondence. Row `i` of the attention is a softmax
/// over the nodes of the second graph of cosine similarity times
/// `inv_tau`; the matched representation is the attention-weighted sum of
/// second-graph rows.
pub fn cross_match<'t>(h1: Var<'t>, h2: Var<'t>, inv_tau: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let cos = h1.normalize_rows().matmul(h2.normalize_rows().transpose()?)?;
    let attention = cos.softmax(Some(inv_tau))?;
    let matched = attention.matmul(h2)?;
    Ok((attention, matched))
}

/// Result of scoring one pair.
#[derive(Debug, Clone)]
pub struct PairOutput {
    pub yhat: f64,
    /// Matching score per node of the first-role graph.
    pub scores: Vec<f64>,
    /// Cross attention, first-role nodes by second-role nodes.
    pub attention: Tensor,
    /// Whether the first argument played the first (smaller) role.
    pub first_is_g1: bool,
}

/// Tape handles of one pair's forward pass.
pub struct PairVars<'t> {
    pub yhat: Var<'t>,
    pub scores: Var<'t>,
    pub attention: Var<'t>,
    pub first_is_g1: bool,
}

/// Orders a pair by `(|V|, |E|, id)`, then by structure read in centrality
/// order, so that the smaller graph plays the first role regardless of
/// argument order or node numbering.
pub fn role_order(a: &Graph, b: &Graph) -> Ordering {
    (a.node_count(), a.edge_count(), a.id())
        .cmp(&(b.node_count(), b.edge_count(), b.id()))
        .then_with(|| ranked_structure(a).cmp(&ranked_structure(b)))
        .then_with(|| a.labels().cmp(b.labels()))
        .then_with(|| a.edges().cmp(b.edges()))
}

fn ranked_structure(g: &Graph) -> (Vec<u32>, Vec<(usize, usize)>) {
    let ranks = g.node_ordering().ranks;
    let mut labels = vec![0; g.node_count()];
    for (v, &r) in ranks.iter().enumerate() {
        labels[r] = g.label(v);
    }
    let mut edges: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .map(|&(u, v)| (ranks[u].min(ranks[v]), ranks[u].max(ranks[v])))
        .collect();
    edges.sort_unstable();
    (labels, edges)
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    params: ModelParams,
    layout: Layout,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    config: ModelConfig,
    params: Vec<NamedTensor>,
}

impl Model {
    /// Fresh weights: linear maps uniform in `±1/sqrt(fan_in)`, positional
    /// dictionary `N(0, 0.02)`, label embeddings `N(0, 1)`, layer-norm gain
    /// 1 and bias 0, temperature so that `tau = tau_init`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.hidden_dim;
        let mut params = ModelParams {
            names: Vec::new(),
            values: Vec::new(),
        };
        let linear = |params: &mut ModelParams, rng: &mut ChaCha8Rng, name: &str, fan_in: usize, shape: &[usize]| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
            params.push(name.to_string(), Tensor::new(shape.to_vec(), data).expect("shape"))
        };
        let normal = |params: &mut ModelParams, rng: &mut ChaCha8Rng, name: &str, std: f64, shape: &[usize]| {
            let dist = Normal::new(0.0, std).expect("valid std");
            let n = shape.iter().product();
            let data = (0..n).map(|_| rng.sample(dist)).collect();
            params.push(name.to_string(), Tensor::new(shape.to_vec(), data).expect("shape"))
        };

        let embedding = normal(&mut params, &mut rng, "embedding", 1.0, &[config.label_vocab_size, d]);
        let gcn = (0..config.gcn_layers)
            .map(|l| GcnLayer {
                w: linear(&mut params, &mut rng, &format!("gcn{l}.w"), d, &[d, d]),
                b: linear(&mut params, &mut rng, &format!("gcn{l}.b"), d, &[d]),
            })
            .collect();
        let pe = normal(&mut params, &mut rng, "pe", 0.02, &[config.pe_dict_size, d]);
        let encoder = (0..config.transformer_layers)
            .map(|l| {
                let p = format!("enc{l}");
                let wq = linear(&mut params, &mut rng, &format!("{p}.wq"), d, &[d, d]);
                let wk = linear(&mut params, &mut rng, &format!("{p}.wk"), d, &[d, d]);
                let wv = linear(&mut params, &mut rng, &format!("{p}.wv"), d, &[d, d]);
                let wo = linear(&mut params, &mut rng, &format!("{p}.wo"), d, &[d, d]);
                let ln_gain = params.push(format!("{p}.ln_gain"), Tensor::filled(&[d], 1.0));
                let ln_bias = params.push(format!("{p}.ln_bias"), Tensor::zeros(&[d]));
                let ffn_w1 = linear(&mut params, &mut rng, &format!("{p}.ffn_w1"), d, &[d, d]);
                let ffn_b1 = linear(&mut params, &mut rng, &format!("{p}.ffn_b1"), d, &[d]);
                let ffn_w2 = linear(&mut params, &mut rng, &format!("{p}.ffn_w2"), d, &[d, d]);
                let ffn_b2 = linear(&mut params, &mut rng, &format!("{p}.ffn_b2"), d, &[d]);
                EncoderLayer {
                    wq,
                    wk,
                    wv,
                    wo,
                    ln_gain,
                    ln_bias,
                    ffn_w1,
                    ffn_b1,
                    ffn_w2,
                    ffn_b2,
                }
            })
            .collect();
        let h = config.mlp_hidden_dim;
        let mlp_w1 = linear(&mut params, &mut rng, "mlp.w1", 2 * d, &[2 * d, h]);
        let mlp_b1 = linear(&mut params, &mut rng, "mlp.b1", 2 * d, &[h]);
        let mlp_w2 = linear(&mut params, &mut rng, "mlp.w2", h, &[h, 1]);
        let mlp_b2 = linear(&mut params, &mut rng, "mlp.b2", h, &[1]);
        let theta_init = (config.tau_init / (1.0 - config.tau_init)).ln();
        let theta = params.push("theta".into(), Tensor::scalar(theta_init));

        Ok(Self {
            config,
            params,
            layout: Layout {
                embedding,
                gcn,
                pe,
                encoder,
                mlp_w1,
                mlp_b1,
                mlp_w2,
                mlp_b2,
                theta,
            },
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    /// Current temperature `tau = sigmoid(theta)`.
    pub fn tau(&self) -> f64 {
        crate::autodiff::sigmoid(self.params.get(self.layout.theta).item())
    }

    pub fn theta_index(&self) -> usize {
        self.layout.theta
    }

    pub fn pe_index(&self) -> usize {
        self.layout.pe
    }

    pub fn pe_dictionary(&self) -> &Tensor {
        self.params.get(self.layout.pe)
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> Bound<'t> {
        Bound {
            vars: self.params.values.iter().map(|v| tape.param(Rc::clone(v))).collect(),
        }
    }

    /// Label-embedding rows for every node.
    pub fn featurize<'t>(&self, p: &Bound<'t>, g: &GraphInputs) -> Result<Var<'t>> {
        if let Some(&bad) = g.labels.iter().find(|&&l| l >= self.config.label_vocab_size) {
            return Err(Error::invalid(format!(
                "node label {bad} outside the label vocabulary of size {}",
                self.config.label_vocab_size
            )));
        }
        p.var(self.layout.embedding).row_gather(&g.labels)
    }

    /// Node representations: GCN stack, plus positional encodings looked
    /// up by centrality rank, through the transformer encoder. Attention
    /// maps of every layer and head are appended to `attention` if given.
    pub fn encode_graph<'t>(
        &self,
        p: &Bound<'t>,
        g: &GraphInputs,
        mut attention: Option<&mut Vec<Tensor>>,
    ) -> Result<Var<'t>> {
        let mut h = self.featurize(p, g)?;
        for layer in &self.layout.gcn {
            h = gcn_layer(h, &g.propagation, p.var(layer.w), p.var(layer.b))?;
        }
        if let Some(&rank) = g.ranks.iter().max() {
            if rank >= self.config.pe_dict_size {
                return Err(Error::PeDictTooSmall {
                    rank,
                    size: self.config.pe_dict_size,
                });
            }
        }
        h = h.add(p.var(self.layout.pe).row_gather(&g.ranks)?)?;

        let dk = self.config.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        for layer in &self.layout.encoder {
            let q = h.matmul(p.var(layer.wq))?;
            let k = h.matmul(p.var(layer.wk))?;
            let v = h.matmul(p.var(layer.wv))?;
            let mut heads = Vec::with_capacity(self.config.heads);
            for head in 0..self.config.heads {
                let qh = q.slice_cols(head * dk, dk)?;
                let kh = k.slice_cols(head * dk, dk)?;
                let vh = v.slice_cols(head * dk, dk)?;
                let a = qh.matmul(kh.transpose()?)?.scale(scale).softmax(None)?;
                if let Some(sink) = attention.as_deref_mut() {
                    sink.push((*a.value()).clone());
                }
                heads.push(a.matmul(vh)?);
            }
            let attended = Var::concat(&heads)?.matmul(p.var(layer.wo))?.add(h)?;
            let normed = attended.layer_norm(p.var(layer.ln_gain), p.var(layer.ln_bias))?;
            let ffn = normed
                .matmul(p.var(layer.ffn_w1))?
                .add(p.var(layer.ffn_b1))?
                .relu()
                .matmul(p.var(layer.ffn_w2))?
                .add(p.var(layer.ffn_b2))?;
            h = ffn.add(attended)?;
        }
        Ok(h)
    }

    /// Inverse temperature `1 / sigmoid(theta)` as a differentiable scalar.
    pub fn inverse_tau<'t>(&self, p: &Bound<'t>) -> Var<'t> {
        p.var(self.layout.theta).sigmoid().recip()
    }

    /// Per-node matching scores `sigmoid(MLP(h_i || h'_i))`, shape `[n1, 1]`.
    pub fn matching_scores<'t>(&self, p: &Bound<'t>, h1: Var<'t>, matched: Var<'t>) -> Result<Var<'t>> {
        Ok(Var::concat(&[h1, matched])?
            .matmul(p.var(self.layout.mlp_w1))?
            .add(p.var(self.layout.mlp_b1))?
            .relu()
            .matmul(p.var(self.layout.mlp_w2))?
            .add(p.var(self.layout.mlp_b2))?
            .sigmoid())
    }

    /// Full pair forward pass on a tape. The smaller graph under
    /// [`role_order`] becomes the first role.
    pub fn forward_vars<'t>(
        &self,
        p: &Bound<'t>,
        a: (&Graph, &GraphInputs),
        b: (&Graph, &GraphInputs),
    ) -> Result<PairVars<'t>> {
        let first_is_g1 = role_order(a.0, b.0) != Ordering::Greater;
        let ((g1, in1), (g2, in2)) = if first_is_g1 { (a, b) } else { (b, a) };
        let h1 = self.encode_graph(p, in1, None)?;
        let h2 = self.encode_graph(p, in2, None)?;
        let (attention, matched) = cross_match(h1, h2, self.inverse_tau(p))?;
        let scores = self.matching_scores(p, h1, matched)?;
        let mean_size = (g1.node_count() + g2.node_count()) as f64 / 2.0;
        let yhat = scores.sum().scale(1.0 / mean_size);
        Ok(PairVars {
            yhat,
            scores,
            attention,
            first_is_g1,
        })
    }

    pub fn forward(&self, a: &Graph, b: &Graph) -> Result<PairOutput> {
        let (ia, ib) = (GraphInputs::new(a)?, GraphInputs::new(b)?);
        self.forward_prepared(a, &ia, b, &ib)
    }

    pub fn forward_prepared(
        &self,
        a: &Graph,
        ia: &GraphInputs,
        b: &Graph,
        ib: &GraphInputs,
    ) -> Result<PairOutput> {
        let tape = Tape::new();
        let p = self.bind(&tape);
        let out = self.forward_vars(&p, (a, ia), (b, ib))?;
        let yhat = out.yhat.item();
        if !yhat.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite prediction for pair ({}, {})",
                a.id(),
                b.id()
            )));
        }
        Ok(PairOutput {
            yhat,
            scores: out.scores.value().data().to_vec(),
            attention: (*out.attention.value()).clone(),
            first_is_g1: out.first_is_g1,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let ckpt = Checkpoint {
            config: self.config.clone(),
            params: self
                .params
                .names
                .iter()
                .zip(&self.params.values)
                .map(|(name, t)| NamedTensor {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    data: t.data().to_vec(),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&ckpt)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        let mut model = Model::new(ckpt.config, 0)?;
        if ckpt.params.len() != model.params.len() {
            return Err(Error::invalid(format!(
                "checkpoint has {} tensors, configuration expects {}",
                ckpt.params.len(),
                model.params.len()
            )));
        }
        for (i, nt) in ckpt.params.into_iter().enumerate() {
            if nt.name != model.params.names[i] || nt.shape != model.params.values[i].shape() {
                return Err(Error::invalid(format!(
                    "checkpoint tensor {} {:?} does not match expected {} {:?}",
                    nt.name,
                    nt.shape,
                    model.params.names[i],
                    model.params.values[i].shape()
                )));
            }
            model.params.values[i] = Rc::new(Tensor::new(nt.shape, nt.data)?);
        }
        Ok(model)
    }
}

/// Loss of a prediction: squared error for regression, binary
/// cross-entropy for classification.
pub fn loss<'t>(yhat: Var<'t>, target: Var<'t>, task: Task) -> Result<Var<'t>> {
    match task {
        Task::Regression => yhat.mse_loss(target),
        Task::Classification => yhat.bce_loss(target),
    }
}

/// Largest relative error between analytic and central-difference
/// gradients of the pair loss with respect to every model parameter.
pub fn check_model_gradient(
    model: &Model,
    a: &Graph,
    b: &Graph,
    target: f64,
    task: Task,
    epsilon: f64,
    seed: u64,
) -> Result<f64> {
    let (ia, ib) = (GraphInputs::new(a)?, GraphInputs::new(b)?);
    let inputs: Vec<Tensor> = model.params.values.iter().map(|t| (**t).clone()).collect();
    crate::autodiff::grad_check(
        &inputs,
        |tape, vars| {
            let bound = Bound::from_vars(vars.to_vec());
            let out = model.forward_vars(&bound, (a, &ia), (b, &ib))?;
            loss(out.yhat, tape.constant(Tensor::scalar(target)), task)
        },
        epsilon,
        seed,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ModelConfig {
        ModelConfig {
            hidden_dim: 16,
            heads: 4,
            mlp_hidden_dim: 16,
            pe_dict_size: 20,
            label_vocab_size: 3,
            ..ModelConfig::default()
        }
    }

    fn path3() -> Graph {
        Graph::unlabeled("p", 3, [(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            heads: 3,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelConfig {
            tau_init: 1.0,
            ..ModelConfig::default()
        };
        assert!(bad.validate().is_err());
        assert_eq!(ModelConfig::for_dataset(15, 4).pe_dict_size, 31);
    }

    #[test]
    fn tau_starts_at_init() {
        let m = Model::new(small_config(), 0).unwrap();
        assert!((m.tau() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn gcn_single_node_zero_weight_gives_relu_bias() {
        let tape = Tape::new();
        let g = Graph::unlabeled("s", 1, []).unwrap();
        let prop = Rc::new(gcn_propagation(&g));
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap());
        let w = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap());
        let y = gcn_layer(x, &prop, w, b).unwrap();
        assert_eq!(y.value().data(), &[0.5, 0.0, 2.0]);
    }

    #[test]
    fn gcn_isolated_nodes_are_independent() {
        let tape = Tape::new();
        let g = Graph::unlabeled("d", 2, []).unwrap();
        let prop = Rc::new(gcn_propagation(&g));
        let x = tape.constant(Tensor::from_rows(&[vec![1.0, -1.0], vec![2.0, 3.0]]).unwrap());
        let w = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap());
        let b = tape.constant(Tensor::new(vec![2], vec![0.1, 0.1]).unwrap());
        let y = gcn_layer(x, &prop, w, b).unwrap();
        assert_eq!(y.value().data(), &[0.1, 0.0, 5.1, 3.1]);
    }

    #[test]
    fn gcn_path_normalization_constants() {
        let tape = Tape::new();
        let prop = Rc::new(gcn_propagation(&path3()));
        let eye = Tensor::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ])
        .unwrap();
        let x = tape.constant(eye.clone());
        let y = gcn_layer(x, &prop, tape.constant(eye), tape.constant(Tensor::zeros(&[3])))
            .unwrap()
            .value();
        let expect = [1.0 / 6f64.sqrt(), 1.0 / 3.0, 1.0 / 6f64.sqrt()];
        for (got, want) in y.row(1).iter().zip(expect) {
            assert!((got - want).abs() < 1e-15);
        }
        // endpoints: self 1/2, middle 1/sqrt(6)
        assert!((y.at(0, 0) - 0.5).abs() < 1e-15);
        assert!((y.at(0, 1) - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert_eq!(y.at(0, 2), 0.0);
    }

    #[test]
    fn zero_encoder_layers_is_gcn_plus_pe() {
        let config = ModelConfig {
            transformer_layers: 0,
            ..small_config()
        };
        let m = Model::new(config.clone(), 3).unwrap();
        let g = Graph::new("g", vec![0, 1, 2, 1], [(0, 1), (1, 2), (1, 3)]).unwrap();
        let inputs = GraphInputs::new(&g).unwrap();
        let tape = Tape::new();
        let p = m.bind(&tape);
        let h = m.encode_graph(&p, &inputs, None).unwrap().value();

        let mut x = m.featurize(&p, &inputs).unwrap();
        for layer in &m.layout.gcn {
            x = gcn_layer(x, &inputs.propagation, p.var(layer.w), p.var(layer.b)).unwrap();
        }
        let ranks = g.node_ordering().ranks;
        let pe = m.pe_dictionary();
        for node in 0..4 {
            for c in 0..config.hidden_dim {
                let want = x.value().at(node, c) + pe.at(ranks[node], c);
                assert_eq!(h.at(node, c), want);
            }
        }
    }

    #[test]
    fn single_node_self_attention_is_one() {
        let m = Model::new(small_config(), 1).unwrap();
        let g = Graph::unlabeled("s", 1, []).unwrap();
        let tape = Tape::new();
        let p = m.bind(&tape);
        let mut maps = Vec::new();
        m.encode_graph(&p, &GraphInputs::new(&g).unwrap(), Some(&mut maps))
            .unwrap();
        assert_eq!(maps.len(), 2 * 4);
        assert!(maps.iter().all(|a| a.data() == [1.0]));
    }

    #[test]
    fn pe_dictionary_too_small_is_reported() {
        let config = ModelConfig {
            pe_dict_size: 3,
            ..small_config()
        };
        let m = Model::new(config, 0).unwrap();
        let g = Graph::unlabeled("g", 4, [(0, 1)]).unwrap();
        assert!(matches!(
            m.forward(&g, &g),
            Err(Error::PeDictTooSmall { rank: 3, size: 3 })
        ));
    }

    #[test]
    fn cross_match_examples() {
        let tape = Tape::new();
        let h1 = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.3, -2.0]]).unwrap());
        let h2 = tape.constant(Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap());
        let inv = tape.constant(Tensor::scalar(2.0));
        let (a, m) = cross_match(h1, h2, inv).unwrap();
        assert_eq!(a.value().data(), &[1.0, 1.0]);
        assert_eq!(m.value().data(), &[0.5, 0.5, 0.5, 0.5]);

        // zero-norm query row: uniform attention
        let h1 = tape.constant(Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap());
        let h2 = tape.constant(Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap());
        let (a, _) = cross_match(h1, h2, inv).unwrap();
        assert_eq!(a.value().data(), &[0.5, 0.5]);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let m = Model::new(small_config(), 0).unwrap();
        let g = Graph::new("g", vec![7], []).unwrap();
        assert!(m.forward(&g, &g).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let m = Model::new(small_config(), 9).unwrap();
        let text = m.to_json().unwrap();
        let back = Model::from_json(&text).unwrap();
        for i in 0..m.params().len() {
            let a = m.params().get(i).data();
            let b = back.params().get(i).data();
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(back.to_json().unwrap(), text);
        assert!(Model::from_json("{\"config\":{},\"params\":[]}").is_err());
    }

    #[test]
    fn end_to_end_gradient_matches_finite_differences() {
        let config = ModelConfig {
            hidden_dim: 8,
            heads: 2,
            mlp_hidden_dim: 8,
            transformer_layers: 1,
            pe_dict_size: 8,
            label_vocab_size: 3,
            ..ModelConfig::default()
        };
        let m = Model::new(config, 5).unwrap();
        let a = Graph::new("a", vec![0, 1, 2, 1, 0, 2], [(0, 1), (1, 2), (2, 3), (3, 4), (1, 5)]).unwrap();
        let b = Graph::new("b", vec![1, 0, 2, 2], [(0, 1), (0, 2), (2, 3)]).unwrap();
        let err = check_model_gradient(&m, &a, &b, 0.4, Task::Regression, 1e-5, 0).unwrap();
        assert!(err < 1e-3, "relative error {err}");
    }
}
