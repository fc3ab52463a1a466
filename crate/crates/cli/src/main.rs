use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use infmcs::autodiff::{check_all_ops, DEFAULT_EPSILON};
use infmcs::dataset::{
    generate_ba_ged, generate_ba_mcs, generate_desk_pool, make_pairs, save_graphs, save_pairs,
    split_dataset, split_groups, Dataset, DatasetManifest, DeskPoolParams, LabeledPair, Metric,
    OracleOptions, Pairing, Preset, Source, Split, DEFAULT_FRACTIONS,
};
use infmcs::eval::{
    auc, bench_csv, bench_runtime, export_pe, mse_metric, precision_at_k, rank_queries,
    ranking_csv, spearman_rho,
};
use infmcs::interpret::{infer_mcs, mcs_quality};
use infmcs::model::{check_model_gradient, Model, ModelConfig, Task};
use infmcs::train::{train, GraphStore, TrainConfig};
use infmcs::{Error, Graph, Result};

#[derive(Parser)]
#[command(name = "infmcs", version, about = "Learned graph similarity with MCS and GED oracles")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true, env = "INFMCS_CONFIG")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Mcs,
    Ged,
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    Ba100,
    Ba200,
    Ba300,
    Desk,
}

#[derive(Clone, Copy, ValueEnum)]
enum Generator {
    /// Core-and-grow pairs labeled by construction.
    CoreGrow,
    /// Labeled graph families labeled by the exact MCS oracle.
    Pool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with graphs, manifest and pairs.
    GenData {
        #[arg(long, value_enum)]
        metric: MetricArg,
        #[arg(long, value_enum, default_value = "desk")]
        preset: PresetArg,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `pool` for the desk MCS preset, `core-grow` otherwise.
        #[arg(long, value_enum)]
        generator: Option<Generator>,
        /// Samples (core-grow) or samples per collection (GED).
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        core_min: Option<usize>,
        #[arg(long)]
        core_max: Option<usize>,
        #[arg(long)]
        add_min: Option<usize>,
        #[arg(long)]
        add_max: Option<usize>,
        #[arg(long)]
        base_nodes: Option<usize>,
        #[arg(long)]
        attach_m: Option<usize>,
        /// Total sampled pairs across the splits.
        #[arg(long)]
        pairs: Option<usize>,
        #[arg(long)]
        beam_width: Option<usize>,
        #[arg(long)]
        families: Option<usize>,
        #[arg(long)]
        per_family: Option<usize>,
        #[arg(long)]
        label_count: Option<u32>,
    },
    /// Label every split's pairs with the oracles, filling the cache.
    Label {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        /// Oracle time budget in seconds.
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Train a model and write checkpoints and a training log.
    Train {
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        hidden_dim: Option<usize>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Test-split metrics of a checkpoint.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Per-pair predictions as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank every test graph against the whole test split.
    Rank {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Per-query results as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract the predicted MCS of one pair.
    InferMcs {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, required_unless_present = "graphs")]
        manifest: Option<PathBuf>,
        #[arg(long)]
        graphs: Option<PathBuf>,
        /// Two graph ids separated by a comma.
        #[arg(long)]
        pair: String,
        /// Oracle budget in seconds for the quality score.
        #[arg(long)]
        budget: Option<f64>,
        /// Write the predicted subgraph as GraphViz.
        #[arg(long)]
        dot: Option<PathBuf>,
    },
    /// Mean seconds per pair of the model and each oracle.
    Bench {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        budget: Option<f64>,
        #[arg(long, default_value_t = 100)]
        pairs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every differentiable op and the model.
    GradCheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Write the positional-encoding dictionary as CSV.
    ExportPe {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ModelOverrides {
    hidden_dim: Option<usize>,
    gcn_layers: Option<usize>,
    transformer_layers: Option<usize>,
    heads: Option<usize>,
    pe_dict_size: Option<usize>,
    tau_init: Option<f64>,
    mlp_hidden_dim: Option<usize>,
    label_vocab_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainOverrides {
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
    grad_clip: Option<f64>,
    keep_all: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct OracleConfig {
    budget_secs: f64,
    beam_width: usize,
    jobs: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        let d = OracleOptions::default();
        Self {
            budget_secs: d.time_budget.as_secs_f64(),
            beam_width: d.beam_width,
            jobs: d.jobs,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RunConfig {
    model: ModelOverrides,
    train: TrainOverrides,
    oracle: OracleConfig,
    seed: Option<u64>,
    manifest: Option<PathBuf>,
    out: Option<PathBuf>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            msg: e.to_string(),
        })
    }

    fn oracle(&self, budget: Option<f64>, jobs: Option<usize>) -> Result<OracleOptions> {
        let secs = budget.unwrap_or(self.oracle.budget_secs);
        if !(secs.is_finite() && secs > 0.0) {
            return Err(invalid(format!("budget must be a positive number of seconds, got {secs}")));
        }
        Ok(OracleOptions {
            time_budget: Duration::from_secs_f64(secs),
            beam_width: self.oracle.beam_width,
            jobs: jobs.unwrap_or(self.oracle.jobs).max(1),
        })
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn write_file(path: &Path, text: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn print_json(value: serde_json::Value) {
    println!("{value}");
}

fn ids_of(graphs: &[Graph]) -> Vec<String> {
    graphs.iter().map(|g| g.id().to_string()).collect()
}

fn preset(p: PresetArg) -> Preset {
    match p {
        PresetArg::Ba100 => Preset::Ba100,
        PresetArg::Ba200 => Preset::Ba200,
        PresetArg::Ba300 => Preset::Ba300,
        PresetArg::Desk => Preset::Desk,
    }
}

fn metric(m: MetricArg) -> Metric {
    match m {
        MetricArg::Mcs => Metric::Mcs,
        MetricArg::Ged => Metric::Ged,
    }
}

#[allow(clippy::too_many_arguments)]
fn gen_data(
    metric_arg: MetricArg,
    preset_arg: PresetArg,
    seed: u64,
    out: &Path,
    generator: Option<Generator>,
    count: Option<usize>,
    core: (Option<usize>, Option<usize>),
    add: (Option<usize>, Option<usize>),
    base_nodes: Option<usize>,
    attach_m: Option<usize>,
    pairs: Option<usize>,
    beam_width: Option<usize>,
    pool: (Option<usize>, Option<usize>, Option<u32>),
) -> Result<serde_json::Value> {
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    let preset = preset(preset_arg);
    let graphs_path = out.join("graphs.jsonl");
    let pairs_path = out.join("pairs.jsonl");
    let mut manifest = DatasetManifest {
        metric: metric(metric_arg),
        graphs: "graphs.jsonl".into(),
        splits: Default::default(),
        pairing: Pairing::Given {
            path: "pairs.jsonl".into(),
        },
        label_cache: None,
        source: Source::Synthetic,
    };
    let graph_count;
    match metric_arg {
        MetricArg::Mcs => {
            let generator = generator.unwrap_or(match preset {
                Preset::Desk => Generator::Pool,
                _ => Generator::CoreGrow,
            });
            match generator {
                Generator::CoreGrow => {
                    let mut p = preset.mcs_params(seed);
                    p.count = count.unwrap_or(p.count);
                    p.core_range = (core.0.unwrap_or(p.core_range.0), core.1.unwrap_or(p.core_range.1));
                    p.add_range = (add.0.unwrap_or(p.add_range.0), add.1.unwrap_or(p.add_range.1));
                    p.attach_m = attach_m.unwrap_or(p.attach_m);
                    let ds = generate_ba_mcs(&p)?;
                    let groups: Vec<Vec<String>> = ds.graphs.chunks(2).map(ids_of).collect();
                    manifest.splits = split_groups(&groups, DEFAULT_FRACTIONS, seed)?;
                    save_graphs(&graphs_path, &ds.graphs)?;
                    save_pairs(&pairs_path, &ds.pairs)?;
                    graph_count = ds.graphs.len();
                }
                Generator::Pool => {
                    let d = DeskPoolParams::default();
                    let p = DeskPoolParams {
                        families: pool.0.unwrap_or(d.families),
                        per_family: pool.1.unwrap_or(d.per_family),
                        core_range: (core.0.unwrap_or(d.core_range.0), core.1.unwrap_or(d.core_range.1)),
                        add_range: (add.0.unwrap_or(d.add_range.0), add.1.unwrap_or(d.add_range.1)),
                        label_count: pool.2.unwrap_or(d.label_count),
                        attach_m: attach_m.unwrap_or(d.attach_m),
                        seed,
                    };
                    let graphs = generate_desk_pool(&p)?;
                    manifest.splits = split_dataset(&ids_of(&graphs), DEFAULT_FRACTIONS, seed)?;
                    manifest.pairing = Pairing::Sampled {
                        count: pairs.unwrap_or(2_500),
                        seed,
                    };
                    manifest.label_cache = Some("label_cache.jsonl".into());
                    save_graphs(&graphs_path, &graphs)?;
                    graph_count = graphs.len();
                }
            }
        }
        MetricArg::Ged => {
            let mut p = preset.ged_params(seed);
            p.count = count.unwrap_or(p.count);
            p.base_nodes = base_nodes.unwrap_or(p.base_nodes);
            p.attach_m = attach_m.unwrap_or(p.attach_m);
            p.beam_width = beam_width.unwrap_or(p.beam_width);
            let total = match (&p.pairing, pairs) {
                (_, Some(n)) => n,
                (Pairing::Sampled { count, .. }, None) => *count,
                _ => 0,
            };
            p.pairing = Pairing::Sampled { count: 0, seed };
            let ds = generate_ba_ged(&p)?;
            manifest.splits = split_dataset(&ids_of(&ds.graphs), DEFAULT_FRACTIONS, seed)?;
            let sampler = DatasetManifest {
                pairing: Pairing::Sampled { count: total, seed },
                ..manifest.clone()
            };
            let mut labeled: Vec<LabeledPair> = Vec::new();
            for split in make_pairs(&sampler)? {
                for (a, b) in split {
                    let (i, j) = (ds.index_of(&a), ds.index_of(&b));
                    let (Some(i), Some(j)) = (i, j) else {
                        return Err(invalid("sampled pair names an unknown graph"));
                    };
                    labeled.push(ds.label_pair(i, j, p.beam_width)?);
                }
            }
            save_graphs(&graphs_path, &ds.graphs)?;
            save_pairs(&pairs_path, &labeled)?;
            graph_count = ds.graphs.len();
        }
    }
    let manifest_path = out.join("manifest.json");
    manifest.save(&manifest_path)?;
    Ok(json!({
        "manifest": manifest_path,
        "graphs": graph_count,
        "metric": manifest.metric.as_str(),
    }))
}

fn load_model(path: &Path) -> Result<Model> {
    Model::load(path)
}

fn task_for(metric: Metric) -> Task {
    match metric {
        Metric::Class => Task::Classification,
        _ => Task::Regression,
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenData {
            metric,
            preset,
            seed,
            out,
            generator,
            count,
            core_min,
            core_max,
            add_min,
            add_max,
            base_nodes,
            attach_m,
            pairs,
            beam_width,
            families,
            per_family,
            label_count,
        } => {
            let summary = gen_data(
                metric,
                preset,
                seed,
                &out,
                generator,
                count,
                (core_min, core_max),
                (add_min, add_max),
                base_nodes,
                attach_m,
                pairs,
                beam_width,
                (families, per_family, label_count),
            )?;
            print_json(summary);
        }
        Command::Label {
            manifest,
            metric: m,
            budget,
            jobs,
        } => {
            let mut mf = DatasetManifest::load(&manifest)?;
            if let Some(m) = m {
                mf.metric = metric(m);
            }
            let ds = Dataset::from_manifest(mf, cfg.oracle(budget, jobs)?)?;
            print_json(json!({
                "metric": ds.manifest.metric.as_str(),
                "train": ds.train.len(),
                "valid": ds.valid.len(),
                "test": ds.test.len(),
            }));
        }
        Command::Train {
            manifest,
            out,
            epochs,
            batch_size,
            seed,
            hidden_dim,
            layers,
            lr,
        } => {
            let manifest = manifest
                .or(cfg.manifest.clone())
                .ok_or_else(|| invalid("train needs --manifest or a manifest in the config"))?;
            let out = out
                .or(cfg.out.clone())
                .ok_or_else(|| invalid("train needs --out or an out directory in the config"))?;
            let ds = Dataset::open(&manifest, cfg.oracle(None, None)?)?;

            let mut mc = ModelConfig::for_dataset(ds.max_nodes(), ds.label_vocab_size());
            let o = &cfg.model;
            if let Some(d) = hidden_dim.or(o.hidden_dim) {
                mc = mc.with_hidden_dim(d);
            }
            mc.gcn_layers = o.gcn_layers.unwrap_or(mc.gcn_layers);
            mc.transformer_layers = layers.or(o.transformer_layers).unwrap_or(mc.transformer_layers);
            mc.heads = o.heads.unwrap_or(mc.heads);
            mc.pe_dict_size = o.pe_dict_size.unwrap_or(mc.pe_dict_size);
            mc.tau_init = o.tau_init.unwrap_or(mc.tau_init);
            mc.mlp_hidden_dim = o.mlp_hidden_dim.unwrap_or(mc.mlp_hidden_dim);
            mc.label_vocab_size = o.label_vocab_size.unwrap_or(mc.label_vocab_size);

            let mut tc = match ds.manifest.source {
                Source::Synthetic => TrainConfig::synthetic(),
                Source::Real => TrainConfig::real(),
            };
            let t = &cfg.train;
            tc.epochs = epochs.or(t.epochs).unwrap_or(tc.epochs);
            tc.batch_size = batch_size.or(t.batch_size).unwrap_or(tc.batch_size);
            tc.seed = seed.or(cfg.seed).unwrap_or(tc.seed);
            tc.adam.lr = lr.or(t.lr).unwrap_or(tc.adam.lr);
            tc.grad_clip = t.grad_clip.or(tc.grad_clip);
            tc.keep_all = t.keep_all.unwrap_or(tc.keep_all);
            tc.task = task_for(ds.manifest.metric);
            tc.checkpoint_dir = Some(out.clone());

            let model = Model::new(mc, tc.seed)?;
            let outcome = train(model, tc, ds.graphs.values(), &ds.train, &ds.valid)?;
            let last = outcome.history.last().expect("at least one epoch");
            print_json(json!({
                "best_checkpoint": outcome.best_checkpoint,
                "best_epoch": outcome.best_epoch,
                "final_train_loss": last.train_loss,
                "final_valid_loss": last.valid_loss,
                "log": out.join("train_log.csv"),
            }));
        }
        Command::Eval {
            checkpoint,
            manifest,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let ds = Dataset::open(&manifest, cfg.oracle(None, None)?)?;
            if ds.test.is_empty() {
                return Err(invalid("the test split has no pairs"));
            }
            let store = GraphStore::new(ds.graphs.values())?;
            let pred = ds
                .test
                .iter()
                .map(|p| store.predict(&model, &p.g1_id, &p.g2_id))
                .collect::<Result<Vec<f64>>>()?;
            let truth: Vec<f64> = ds.test.iter().map(|p| p.label).collect();
            let mut summary = json!({
                "pairs": pred.len(),
                "mse": mse_metric(&pred, &truth)?,
                "rho": spearman_rho(&pred, &truth)?,
                "p_at_10": precision_at_k(&pred, &truth, 10)?,
            });
            if ds.manifest.metric == Metric::Class {
                let labels: Vec<bool> = truth.iter().map(|&t| t == 1.0).collect();
                summary["auc"] = json!(auc(&pred, &labels)?);
            }
            if let Some(path) = out {
                let mut csv = String::from("g1,g2,label,prediction\n");
                for (p, y) in ds.test.iter().zip(&pred) {
                    csv.push_str(&format!("{},{},{},{}\n", p.g1_id, p.g2_id, p.label, y));
                }
                write_file(&path, csv)?;
            }
            print_json(summary);
        }
        Command::Rank {
            checkpoint,
            manifest,
            k,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let mf = DatasetManifest::load(&manifest)?;
            if mf.metric == Metric::Class {
                return Err(invalid("ranking needs an oracle metric (mcs or ged)"));
            }
            let graphs: HashMap<String, Graph> = infmcs::dataset::load_graphs(&mf.graphs)?
                .into_iter()
                .map(|g| (g.id().to_string(), g))
                .collect();
            let mut cache = match &mf.label_cache {
                Some(p) => infmcs::dataset::LabelCache::open(p)?,
                None => infmcs::dataset::LabelCache::in_memory(),
            };
            let ids = mf.ids_in(Split::Test);
            let summary = rank_queries(&model, &graphs, &ids, mf.metric, cfg.oracle(None, None)?, &mut cache, k)?;
            if let Some(path) = out {
                write_file(&path, ranking_csv(&summary))?;
            }
            print_json(json!({
                "queries": summary.results.len(),
                "k": k,
                "mean_rho": summary.mean_rho,
                "global_rho": summary.global_rho,
                "p_at_k": summary.mean_precision_at_k,
                "mse": summary.mse,
            }));
        }
        Command::InferMcs {
            checkpoint,
            manifest,
            graphs,
            pair,
            budget,
            dot,
        } => {
            let model = load_model(&checkpoint)?;
            let graph_path = match (graphs, manifest) {
                (Some(g), _) => g,
                (None, Some(m)) => DatasetManifest::load(&m)?.graphs,
                (None, None) => return Err(invalid("infer-mcs needs --graphs or --manifest")),
            };
            let (a_id, b_id) = pair
                .split_once(',')
                .ok_or_else(|| invalid(format!("--pair expects two ids separated by a comma, got {pair:?}")))?;
            let all = infmcs::dataset::load_graphs(&graph_path)?;
            let find = |id: &str| {
                all.iter()
                    .find(|g| g.id() == id.trim())
                    .ok_or_else(|| invalid(format!("unknown graph id {id}")))
            };
            let (a, b) = (find(a_id)?, find(b_id)?);
            let pred = infer_mcs(&model, a, b)?;
            let opts = cfg.oracle(budget, None)?;
            let quality = match mcs_quality(&pred, a, b, opts.time_budget) {
                Ok(q) => Some(q),
                Err(Error::BudgetExceeded { .. }) => None,
                Err(e) => return Err(e),
            };
            if let Some(path) = dot {
                write_file(&path, pred.to_dot())?;
            }
            let mut v = json!({
                "yhat": pred.yhat,
                "m": pred.m,
                "g1": pred.g1_id,
                "nodes": pred.nodes,
                "edges": pred.edges(),
            });
            if let Some(q) = quality {
                v["quality"] = json!(q);
            }
            print_json(v);
        }
        Command::Bench {
            checkpoint,
            manifest,
            budget,
            pairs,
            out,
        } => {
            let model = load_model(&checkpoint)?;
            let mf = DatasetManifest::load(&manifest)?;
            let graphs: HashMap<String, Graph> = infmcs::dataset::load_graphs(&mf.graphs)?
                .into_iter()
                .map(|g| (g.id().to_string(), g))
                .collect();
            let test = match &mf.pairing {
                Pairing::Given { .. } => {
                    Dataset::from_manifest(mf.clone(), cfg.oracle(None, None)?)?
                        .test
                        .into_iter()
                        .map(|p| (p.g1_id, p.g2_id))
                        .collect()
                }
                _ => make_pairs(&mf)?[2].clone(),
            };
            let selected: Vec<(&Graph, &Graph)> = test
                .iter()
                .take(pairs)
                .map(|(a, b)| Ok((&graphs[a], &graphs[b])))
                .collect::<Result<_>>()?;
            let rows = bench_runtime(&model, &selected, cfg.oracle(budget, None)?)?;
            let csv = bench_csv(&rows);
            if let Some(path) = out {
                write_file(&path, &csv)?;
            }
            print!("{csv}");
        }
        Command::GradCheck { seed, seeds } => {
            let mut worst: HashMap<String, f64> = HashMap::new();
            let mut order = Vec::new();
            for s in seed..seed + seeds.max(1) {
                for (name, err) in check_all_ops(s, DEFAULT_EPSILON)? {
                    let e = worst.entry(name.to_string()).or_insert_with(|| {
                        order.push(name.to_string());
                        0.0
                    });
                    *e = e.max(err);
                }
                let err = model_gradient(s)?;
                let e = worst.entry("model".into()).or_insert(0.0);
                *e = e.max(err);
            }
            order.push("model".into());
            let mut failed = Vec::new();
            for name in &order {
                let limit = if name == "model" { 1e-3 } else { 1e-4 };
                let err = worst[name];
                let status = if err < limit { "ok" } else { "FAIL" };
                if err >= limit {
                    failed.push(name.clone());
                }
                println!("{name} {err:.3e} {status}");
            }
            if !failed.is_empty() {
                return Err(Error::Numeric(format!("gradient check failed for {}", failed.join(","))));
            }
        }
        Command::ExportPe { checkpoint, out } => {
            let model = load_model(&checkpoint)?;
            export_pe(&model, &out)?;
            print_json(json!({"rows": model.pe_dictionary().rows(), "out": out}));
        }
    }
    Ok(())
}

/// End-to-end gradient check on a 6-node pair with a small model.
fn model_gradient(seed: u64) -> Result<f64> {
    let config = ModelConfig {
        hidden_dim: 8,
        heads: 2,
        mlp_hidden_dim: 8,
        transformer_layers: 1,
        pe_dict_size: 8,
        label_vocab_size: 3,
        ..ModelConfig::default()
    };
    let model = Model::new(config, seed)?;
    let a = Graph::new("a", vec![0, 1, 2, 1, 0, 2], [(0, 1), (1, 2), (2, 3), (3, 4), (1, 5)])?;
    let b = Graph::new("b", vec![1, 0, 2, 2, 0, 1], [(0, 1), (0, 2), (2, 3), (3, 4), (4, 5)])?;
    check_model_gradient(&model, &a, &b, 0.4, Task::Regression, 1e-5, seed)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::BudgetExceeded { .. } => 3,
        Error::Numeric(_) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::from(exit_code(&e))
        }
    }
}
