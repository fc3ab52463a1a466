use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node index {index} out of range for graph with {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("graph must have at least one node")]
    EmptyGraph,

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("time budget of {budget_secs}s exceeded (best bound so far: {best_bound})")]
    BudgetExceeded { budget_secs: f64, best_bound: usize },

    #[error("node rank {rank} does not fit the positional-encoding dictionary of size {size}; increase pe_dict_size")]
    PeDictTooSmall { rank: usize, size: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidGraph(_) => "invalid_graph",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::EmptyGraph => "empty_graph",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::BudgetExceeded { .. } => "budget_exceeded",
            Error::PeDictTooSmall { .. } => "pe_dict_too_small",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Numeric(_) => "numeric",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
