//! Metrics, the ranking protocol, runtime benchmarks and positional
//! encoding export.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{label_pairs, LabelCache, Metric, OracleOptions};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::Model;
use crate::oracle::{ged_astar, ged_beam, ged_hungarian, mcs_exact, McsOptions};
use crate::train::GraphStore;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("length mismatch: {a} vs {b}")));
    }
    if a == 0 {
        return Err(Error::invalid("metric over an empty sequence"));
    }
    Ok(())
}

pub fn mse_metric(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64)
}

/// 1-based ranks in ascending order, ties sharing their average rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Spearman's rank correlation; 0 when either side has no rank variance.
pub fn spearman_rho(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    Ok(pearson(&average_ranks(pred), &average_ranks(truth)))
}

/// Candidate indices by score descending, ties by index ascending.
pub fn top_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

/// Overlap of the predicted and true top-`k`, divided by `k`. Candidates
/// are expected in id order so that index order breaks ties. `k` larger
/// than the candidate list is clamped.
pub fn precision_at_k(pred: &[f64], truth: &[f64], k: usize) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let k = k.min(pred.len());
    let top_pred = &top_order(pred)[..k];
    let top_truth = &top_order(truth)[..k];
    let hits = top_pred.iter().filter(|i| top_truth.contains(i)).count();
    Ok(hits as f64 / k as f64)
}

/// Mann–Whitney estimate of `P(pos > neg) + 0.5 P(pos = neg)`.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("auc needs both positive and negative labels"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub query: String,
    /// Candidates in id order.
    pub candidates: Vec<String>,
    pub predicted: Vec<f64>,
    pub truth: Vec<f64>,
    pub rho: f64,
    pub precision_at_k: f64,
}

impl RankingResult {
    /// Candidate ids ordered by predicted score.
    pub fn predicted_ranking(&self) -> Vec<&str> {
        top_order(&self.predicted)
            .into_iter()
            .map(|i| self.candidates[i].as_str())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub k: usize,
    pub mean_rho: f64,
    pub global_rho: f64,
    pub mean_precision_at_k: f64,
    pub mse: f64,
    pub results: Vec<RankingResult>,
}

/// Each query graph is scored against every graph in `ids` (itself
/// included). Truth comes from the oracles through the label cache.
pub fn rank_queries(
    model: &Model,
    graphs: &HashMap<String, Graph>,
    ids: &[String],
    metric: Metric,
    options: OracleOptions,
    cache: &mut LabelCache,
    k: usize,
) -> Result<RankingSummary> {
    if ids.is_empty() {
        return Err(Error::invalid("no query graphs"));
    }
    let mut candidates = ids.to_vec();
    candidates.sort();
    let store = GraphStore::new(candidates.iter().map(|id| {
        graphs.get(id).ok_or_else(|| Error::invalid(format!("unknown graph id {id}")))
    }).collect::<Result<Vec<_>>>()?)?;
    let mut results = Vec::with_capacity(candidates.len());
    let (mut all_pred, mut all_truth) = (Vec::new(), Vec::new());
    for q in &candidates {
        let pairs: Vec<(String, String)> = candidates.iter().map(|c| (q.clone(), c.clone())).collect();
        let truth: Vec<f64> = label_pairs(&pairs, graphs, metric, options, cache)?
            .into_iter()
            .map(|p| p.label)
            .collect();
        let predicted = candidates
            .iter()
            .map(|c| store.predict(model, q, c))
            .collect::<Result<Vec<f64>>>()?;
        results.push(RankingResult {
            query: q.clone(),
            candidates: candidates.clone(),
            rho: spearman_rho(&predicted, &truth)?,
            precision_at_k: precision_at_k(&predicted, &truth, k)?,
            predicted: predicted.clone(),
            truth: truth.clone(),
        });
        all_pred.extend(predicted);
        all_truth.extend(truth);
    }
    let n = results.len() as f64;
    Ok(RankingSummary {
        k,
        mean_rho: results.iter().map(|r| r.rho).sum::<f64>() / n,
        global_rho: spearman_rho(&all_pred, &all_truth)?,
        mean_precision_at_k: results.iter().map(|r| r.precision_at_k).sum::<f64>() / n,
        mse: mse_metric(&all_pred, &all_truth)?,
        results,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub mean_seconds: f64,
    pub pairs: usize,
    /// Pairs on which the method ran out of budget; their time still
    /// counts.
    pub budget_exceeded: usize,
}

/// Mean wall time per pair of the model and each oracle.
pub fn bench_runtime(
    model: &Model,
    pairs: &[(&Graph, &Graph)],
    options: OracleOptions,
) -> Result<Vec<BenchRow>> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs to benchmark"));
    }
    type Method<'a> = Box<dyn Fn(&Graph, &Graph) -> Result<()> + 'a>;
    let methods: Vec<(&str, Method)> = vec![
        ("model", Box::new(|a, b| model.forward(a, b).map(|_| ()))),
        (
            "mcs_exact",
            Box::new(|a, b| {
                mcs_exact(
                    a,
                    b,
                    McsOptions {
                        respect_labels: true,
                        time_budget: options.time_budget,
                    },
                )
                .map(|_| ())
            }),
        ),
        ("ged_astar", Box::new(|a, b| ged_astar(a, b, options.time_budget).map(|_| ()))),
        ("ged_beam", Box::new(|a, b| ged_beam(a, b, options.beam_width).map(|_| ()))),
        ("ged_hungarian", Box::new(|a, b| ged_hungarian(a, b).map(|_| ()))),
    ];
    let mut rows = Vec::new();
    for (name, run) in methods {
        let mut total = Duration::ZERO;
        let mut exceeded = 0;
        for (a, b) in pairs {
            let start = Instant::now();
            match run(a, b) {
                Ok(()) => {}
                Err(Error::BudgetExceeded { .. }) => exceeded += 1,
                Err(e) => return Err(e),
            }
            total += start.elapsed();
        }
        rows.push(BenchRow {
            method: name.to_string(),
            mean_seconds: total.as_secs_f64() / pairs.len() as f64,
            pairs: pairs.len(),
            budget_exceeded: exceeded,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("method,mean_seconds,pairs,budget_exceeded\n");
    for r in rows {
        out.push_str(&format!("{},{:e},{},{}\n", r.method, r.mean_seconds, r.pairs, r.budget_exceeded));
    }
    out
}

/// One row per positional-encoding entry: `index,v0,...,v{d-1}`.
pub fn pe_csv(model: &Model) -> String {
    let pe = model.pe_dictionary();
    let mut out = String::from("index");
    for c in 0..pe.cols() {
        out.push_str(&format!(",v{c}"));
    }
    out.push('\n');
    for r in 0..pe.rows() {
        out.push_str(&r.to_string());
        for v in pe.row(r) {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

pub fn export_pe(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, pe_csv(model)).map_err(|e| Error::io(path, e))
}

pub fn ranking_csv(summary: &RankingSummary) -> String {
    let mut out = String::from("query,rho,precision_at_k\n");
    for r in &summary.results {
        out.push_str(&format!("{},{},{}\n", r.query, r.rho, r.precision_at_k));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_examples() {
        assert_eq!(mse_metric(&[0.2, 0.4], &[0.2, 0.4]).unwrap(), 0.0);
        let m = mse_metric(&[0.3, 0.6, 0.9], &[0.2, 0.5, 0.8]).unwrap();
        assert!((m - 0.01).abs() < 1e-12);
        assert!(mse_metric(&[1.0], &[]).is_err());
    }

    #[test]
    fn spearman_examples() {
        let a = [0.1, 0.5, 0.3, 0.9];
        assert!((spearman_rho(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((spearman_rho(&a, &rev).unwrap() + 1.0).abs() < 1e-12);
        assert_eq!(spearman_rho(&a, &[0.2; 4]).unwrap(), 0.0);
    }

    #[test]
    fn average_ranks_share_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn precision_examples() {
        let s: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(precision_at_k(&s, &s, 10).unwrap(), 1.0);
        let rev: Vec<f64> = s.iter().map(|x| -x).collect();
        assert_eq!(precision_at_k(&s, &rev, 10).unwrap(), 0.0);
        let mut half = rev.clone();
        for v in half.iter_mut().skip(15) {
            *v += 100.0;
        }
        assert_eq!(precision_at_k(&s, &half, 10).unwrap(), 0.5);
    }

    #[test]
    fn precision_ties_follow_index_order() {
        let pred = [1.0, 1.0, 1.0, 0.0];
        let truth = [0.0, 0.0, 1.0, 0.5];
        assert_eq!(precision_at_k(&pred, &truth, 1).unwrap(), 0.0);
        assert_eq!(precision_at_k(&pred, &truth, 2).unwrap(), 0.0);
        assert!((precision_at_k(&pred, &truth, 3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 6], &[true, false, true, false, false, true]).unwrap(), 0.5);
        assert!(auc(&[0.5], &[true]).is_err());
    }
}
