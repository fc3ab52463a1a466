//! Reading an MCS out of a trained model's matching scores.

use std::time::Duration;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::Model;
use crate::oracle::{self, mcs_exact, McsOptions};

#[derive(Debug, Clone, Serialize)]
pub struct PredictedMcs {
    pub yhat: f64,
    pub m: usize,
    /// Id of the graph in the first (smaller) role.
    pub g1_id: String,
    /// Selected nodes of that graph, ascending.
    pub nodes: Vec<usize>,
    #[serde(skip)]
    pub subgraph: Graph,
    pub scores: Vec<f64>,
}

impl PredictedMcs {
    /// GraphViz edge list of the selected subgraph in original node ids.
    pub fn to_dot(&self) -> String {
        let mut out = format!("graph \"{}\" {{\n", self.g1_id.replace('"', "'"));
        for (i, &node) in self.nodes.iter().enumerate() {
            out.push_str(&format!("  {node} [label=\"{node}:{}\"];\n", self.subgraph.label(i)));
        }
        for &(u, v) in self.subgraph.edges() {
            out.push_str(&format!("  {} -- {};\n", self.nodes[u], self.nodes[v]));
        }
        out.push_str("}\n");
        out
    }

    /// Edges of the selected subgraph in original node ids.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.subgraph
            .edges()
            .iter()
            .map(|&(u, v)| (self.nodes[u], self.nodes[v]))
            .collect()
    }
}

/// Size estimate `round(yhat * (n1 + n2) / 2)`, half-up, clamped to
/// `0..=n1`.
pub fn predicted_size(yhat: f64, n1: usize, n2: usize) -> usize {
    let m = (yhat * (n1 + n2) as f64 / 2.0 + 0.5).floor();
    if m.is_nan() || m <= 0.0 {
        0
    } else {
        (m as usize).min(n1)
    }
}

/// Indices of the `m` highest scores, ties by index; returned ascending.
pub fn top_m_nodes(scores: &[f64], m: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut top: Vec<usize> = order.into_iter().take(m).collect();
    top.sort_unstable();
    top
}

/// Predicted MCS: the subgraph of the smaller graph induced by its top-`m`
/// matching scores.
pub fn infer_mcs(model: &Model, a: &Graph, b: &Graph) -> Result<PredictedMcs> {
    let out = model.forward(a, b)?;
    let (g1, g2) = if out.first_is_g1 { (a, b) } else { (b, a) };
    let m = predicted_size(out.yhat, g1.node_count(), g2.node_count());
    let nodes = top_m_nodes(&out.scores, m);
    Ok(PredictedMcs {
        yhat: out.yhat,
        m,
        g1_id: g1.id().to_string(),
        subgraph: g1.induced_subgraph(&nodes)?.with_id(format!("{}_pred", g1.id())),
        nodes,
        scores: out.scores,
    })
}

/// Exact MCS of the pair as an induced subgraph of `g1`.
pub fn true_mcs(g1: &Graph, g2: &Graph, budget: Duration) -> Result<Graph> {
    let r = mcs_exact(
        g1,
        g2,
        McsOptions {
            respect_labels: true,
            time_budget: budget,
        },
    )?;
    let mut nodes: Vec<usize> = r
        .mapping
        .ok_or_else(|| Error::invalid("MCS oracle returned no witness"))?
        .into_iter()
        .map(|(u, _)| u)
        .collect();
    nodes.sort_unstable();
    Ok(g1.induced_subgraph(&nodes)?.with_id(format!("{}_mcs", g1.id())))
}

/// nMCS between the predicted subgraph and the exact MCS of the pair.
/// Two empty subgraphs agree perfectly; an empty prediction against a
/// non-empty MCS scores 0.
pub fn mcs_quality(predicted: &PredictedMcs, a: &Graph, b: &Graph, budget: Duration) -> Result<f64> {
    let (g1, g2) = if predicted.g1_id == a.id() { (a, b) } else { (b, a) };
    let truth = true_mcs(g1, g2, budget)?;
    subgraph_similarity(&predicted.subgraph, &truth, budget)
}

pub fn subgraph_similarity(p: &Graph, t: &Graph, budget: Duration) -> Result<f64> {
    match (p.is_empty(), t.is_empty()) {
        (true, true) => Ok(1.0),
        (true, false) | (false, true) => Ok(0.0),
        (false, false) => {
            let r = mcs_exact(
                p,
                t,
                McsOptions {
                    respect_labels: true,
                    time_budget: budget,
                },
            )?;
            Ok(oracle::nmcs(p, t, r.value))
        }
    }
}
