//! Ground-truth similarity oracles: exact maximum common induced subgraph,
//! exact and bounded graph edit distance, and the normalizers that turn
//! either value into a similarity in `[0, 1]`.

mod ged;
mod hungarian;
mod mcs;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use ged::{edit_path_cost, ged_astar, ged_beam, ged_hungarian, label_ged};
pub use hungarian::hungarian_assignment;
pub use mcs::{mcs_exact, McsOptions};

use crate::graph::Graph;

/// Default A* time budget per pair at desk scale.
pub const DEFAULT_ASTAR_BUDGET: Duration = Duration::from_secs(10);
/// Default beam width for the bounded GED search.
pub const DEFAULT_BEAM_WIDTH: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Beam,
    Hungarian,
    FallbackMin,
    /// Label produced by a dataset generator rather than an oracle search.
    Generator,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Exact => "exact",
            Provenance::Beam => "beam",
            Provenance::Hungarian => "hungarian",
            Provenance::FallbackMin => "fallback_min",
            Provenance::Generator => "generator",
        }
    }
}

/// An MCS size or GED cost together with how it was obtained.
///
/// For MCS results the mapping is a witness `(node in g1, node in g2)`
/// list; for GED results it is the node substitutions of the edit path.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub value: usize,
    pub provenance: Provenance,
    pub mapping: Option<Vec<(usize, usize)>>,
    pub elapsed: Duration,
}

/// `mcs / ((|G1| + |G2|) / 2)`.
pub fn nmcs(g1: &Graph, g2: &Graph, mcs_value: usize) -> f64 {
    nmcs_sizes(g1.node_count(), g2.node_count(), mcs_value)
}

pub fn nmcs_sizes(n1: usize, n2: usize, mcs_value: usize) -> f64 {
    if n1 + n2 == 0 {
        return 0.0;
    }
    mcs_value as f64 / ((n1 + n2) as f64 / 2.0)
}

/// `exp(-ged / ((|G1| + |G2|) / 2))`.
pub fn nged(g1: &Graph, g2: &Graph, ged_value: f64) -> f64 {
    nged_sizes(g1.node_count(), g2.node_count(), ged_value)
}

pub fn nged_sizes(n1: usize, n2: usize, ged_value: f64) -> f64 {
    if ged_value == 0.0 {
        return 1.0;
    }
    (-ged_value / ((n1 + n2) as f64 / 2.0)).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizer_examples() {
        let five = Graph::unlabeled("a", 5, [(0, 1)]).unwrap();
        assert_eq!(nmcs(&five, &five, 5), 1.0);
        let tri = Graph::unlabeled("t", 3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let path = Graph::unlabeled("p", 3, [(0, 1), (1, 2)]).unwrap();
        assert!((nmcs(&tri, &path, 2) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(nmcs(&tri, &path, 0), 0.0);

        assert_eq!(nged(&tri, &path, 0.0), 1.0);
        assert!((nged(&tri, &path, 1.0) - (-1.0f64 / 3.0).exp()).abs() < 1e-15);
        assert!((nged(&tri, &path, 1.0) - 0.7165).abs() < 1e-4);
        assert_eq!(nged(&tri, &path, f64::INFINITY), 0.0);
    }
}
