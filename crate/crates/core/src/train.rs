//! Adam training over labeled pairs with validation-based checkpoint
//! selection.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::dataset::{LabeledPair, Metric};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{loss, GraphInputs, Model, ModelParams, Task};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        let zeros = |i| Tensor::zeros(params.get(i).shape());
        Self {
            config,
            step: 0,
            m: (0..params.len()).map(zeros).collect(),
            v: (0..params.len()).map(zeros).collect(),
        }
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut ModelParams, grads: &[Tensor], state: &mut OptimizerState) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::invalid(format!(
            "{} gradients and {} moment tensors for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.get(i).shape() {
            return Err(Error::ShapeMismatch {
                op: "adam_step",
                left: params.get(i).shape().to_vec(),
                right: g.shape().to_vec(),
            });
        }
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        let p = params.get_mut(i).data_mut();
        for k in 0..p.len() {
            m[k] = beta1 * m[k] + (1.0 - beta1) * g.data()[k];
            v[k] = beta2 * v[k] + (1.0 - beta2) * g.data()[k] * g.data()[k];
            p[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub task: Task,
    pub checkpoint_dir: Option<PathBuf>,
    pub adam: AdamConfig,
    /// Rescale the batch gradient to at most this global norm.
    pub grad_clip: Option<f64>,
    /// Keep a checkpoint file per epoch instead of only `last` and `best`.
    pub keep_all: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::real()
    }
}

impl TrainConfig {
    /// 100 epochs with batches of 128.
    pub fn real() -> Self {
        Self {
            epochs: 100,
            batch_size: 128,
            seed: 0,
            task: Task::Regression,
            checkpoint_dir: None,
            adam: AdamConfig::default(),
            grad_clip: None,
            keep_all: false,
        }
    }

    /// 30 epochs with batches of 32.
    pub fn synthetic() -> Self {
        Self {
            epochs: 30,
            batch_size: 32,
            ..Self::real()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        if self.grad_clip.is_some_and(|c| c.is_nan() || c <= 0.0) {
            return Err(Error::invalid("grad_clip must be positive"));
        }
        Ok(())
    }
}

/// Loss of a single prediction, outside any tape.
pub fn loss_value(yhat: f64, target: f64, task: Task) -> f64 {
    match task {
        Task::Regression => (yhat - target).powi(2),
        Task::Classification => {
            let p = yhat.clamp(1e-7, 1.0 - 1e-7);
            -(target * p.ln() + (1.0 - target) * (1.0 - p).ln())
        }
    }
}

fn check_task(pairs: &[LabeledPair], task: Task) -> Result<()> {
    for p in pairs {
        let ok = match task {
            Task::Classification => p.metric == Metric::Class,
            Task::Regression => p.metric != Metric::Class,
        };
        if !ok {
            return Err(Error::invalid(format!(
                "pair ({}, {}) has a {} label, which does not fit a {:?} task",
                p.g1_id,
                p.g2_id,
                p.metric.as_str(),
                task
            )));
        }
    }
    Ok(())
}

/// Graphs with their precomputed model inputs.
pub struct GraphStore<'g> {
    entries: HashMap<&'g str, (&'g Graph, GraphInputs)>,
}

impl<'g> GraphStore<'g> {
    pub fn new(graphs: impl IntoIterator<Item = &'g Graph>) -> Result<Self> {
        let mut entries = HashMap::new();
        for g in graphs {
            entries.insert(g.id(), (g, GraphInputs::new(g)?));
        }
        Ok(Self { entries })
    }

    pub fn get(&self, id: &str) -> Result<(&'g Graph, &GraphInputs)> {
        self.entries
            .get(id)
            .map(|(g, i)| (*g, i))
            .ok_or_else(|| Error::invalid(format!("unknown graph id {id}")))
    }

    pub fn predict(&self, model: &Model, a: &str, b: &str) -> Result<f64> {
        let (ga, ia) = self.get(a)?;
        let (gb, ib) = self.get(b)?;
        Ok(model.forward_prepared(ga, ia, gb, ib)?.yhat)
    }
}

/// Mean loss of `model` over `pairs`.
pub fn evaluate_loss(model: &Model, store: &GraphStore<'_>, pairs: &[LabeledPair], task: Task) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs to evaluate"));
    }
    let mut total = 0.0;
    for p in pairs {
        total += loss_value(store.predict(model, &p.g1_id, &p.g2_id)?, p.label, task);
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
    pub wall_seconds: f64,
}

pub struct Trainer<'g> {
    pub model: Model,
    pub state: OptimizerState,
    pub config: TrainConfig,
    store: GraphStore<'g>,
    rng: ChaCha8Rng,
    epoch: usize,
}

impl<'g> Trainer<'g> {
    pub fn new(model: Model, config: TrainConfig, graphs: impl IntoIterator<Item = &'g Graph>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            state: OptimizerState::new(model.params(), config.adam),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            store: GraphStore::new(graphs)?,
            model,
            config,
            epoch: 0,
        })
    }

    pub fn store(&self) -> &GraphStore<'g> {
        &self.store
    }

    pub fn epochs_run(&self) -> usize {
        self.epoch
    }

    /// Mean loss and mean gradient over a batch, one tape per pair,
    /// reduced in order.
    pub fn batch_gradient(&self, batch: &[&LabeledPair]) -> Result<(f64, Vec<Tensor>)> {
        let params = self.model.params();
        let mut sum: Vec<Tensor> = (0..params.len()).map(|i| Tensor::zeros(params.get(i).shape())).collect();
        let mut total = 0.0;
        for p in batch {
            let (ga, ia) = self.store.get(&p.g1_id)?;
            let (gb, ib) = self.store.get(&p.g2_id)?;
            let tape = Tape::new();
            let bound = self.model.bind(&tape);
            let out = self.model.forward_vars(&bound, (ga, ia), (gb, ib))?;
            let l = loss(out.yhat, tape.constant(Tensor::scalar(p.label)), self.config.task)?;
            let value = l.item();
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss on pair ({}, {})",
                    p.g1_id, p.g2_id
                )));
            }
            total += value;
            tape.backward(l)?;
            for (acc, g) in sum.iter_mut().zip(bound.grads(params)) {
                acc.add_assign(&g);
            }
        }
        let n = batch.len() as f64;
        for g in &mut sum {
            g.scale_assign(1.0 / n);
        }
        Ok((total / n, sum))
    }

    pub fn step(&mut self, batch: &[&LabeledPair]) -> Result<f64> {
        let (l, mut grads) = self.batch_gradient(batch)?;
        if let Some(clip) = self.config.grad_clip {
            let norm = grads
                .iter()
                .flat_map(|g| g.data().iter())
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt();
            if norm > clip {
                for g in &mut grads {
                    g.scale_assign(clip / norm);
                }
            }
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        adam_step(self.model.params_mut(), &grads, &mut self.state)?;
        Ok(l)
    }

    /// One pass over `pairs` in a seeded shuffled order; returns the mean
    /// of the batch losses.
    pub fn run_epoch(&mut self, pairs: &[LabeledPair]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(Error::invalid("the training split has no pairs"));
        }
        check_task(pairs, self.config.task)?;
        let mut order: Vec<&LabeledPair> = pairs.iter().collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(self.config.batch_size) {
            total += self.step(chunk)?;
            batches += 1;
        }
        self.epoch += 1;
        Ok(total / batches as f64)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Model,
    pub best_epoch: usize,
    pub best_checkpoint: Option<PathBuf>,
    pub history: Vec<EpochLog>,
}

fn write_log(path: &Path, history: &[EpochLog]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("epoch,train_loss,valid_loss,wall_seconds\n");
    for h in history {
        let valid = h.valid_loss.map_or(String::new(), |v| v.to_string());
        text.push_str(&format!("{},{},{},{:.3}\n", h.epoch, h.train_loss, valid, h.wall_seconds));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Trains for `config.epochs` epochs and keeps the parameters with the
/// lowest validation loss (training loss when there is no validation
/// split). With a checkpoint directory, writes `last.json`, `best.json`
/// (or `epoch_<k>.json` with `keep_all`) and `train_log.csv`.
pub fn train<'g>(
    model: Model,
    config: TrainConfig,
    graphs: impl IntoIterator<Item = &'g Graph>,
    train_pairs: &[LabeledPair],
    valid_pairs: &[LabeledPair],
) -> Result<TrainOutcome> {
    if train_pairs.is_empty() {
        return Err(Error::invalid("the training split has no pairs"));
    }
    check_task(train_pairs, config.task)?;
    check_task(valid_pairs, config.task)?;
    let dir = config.checkpoint_dir.clone();
    if let Some(d) = &dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    let mut trainer = Trainer::new(model, config, graphs)?;
    let start = Instant::now();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut best_path = None;
    for epoch in 1..=trainer.config.epochs {
        let train_loss = trainer.run_epoch(train_pairs)?;
        let valid_loss = if valid_pairs.is_empty() {
            None
        } else {
            Some(evaluate_loss(&trainer.model, &trainer.store, valid_pairs, trainer.config.task)?)
        };
        history.push(EpochLog {
            epoch,
            train_loss,
            valid_loss,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
        let score = valid_loss.unwrap_or(train_loss);
        let improved = best.as_ref().is_none_or(|(b, _, _)| score < *b);
        if improved {
            best = Some((score, epoch, trainer.model.clone()));
        }
        if let Some(d) = &dir {
            let name = if trainer.config.keep_all {
                format!("epoch_{epoch}.json")
            } else {
                "last.json".to_string()
            };
            trainer.model.save(d.join(&name))?;
            if improved {
                let path = if trainer.config.keep_all {
                    d.join(name)
                } else {
                    let p = d.join("best.json");
                    trainer.model.save(&p)?;
                    p
                };
                best_path = Some(path);
            }
            write_log(&d.join("train_log.csv"), &history)?;
        }
    }
    let (_, best_epoch, best_model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best: best_model,
        best_epoch,
        best_checkpoint: best_path,
        history,
    })
}
