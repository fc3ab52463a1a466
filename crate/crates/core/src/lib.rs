pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod interpret;
pub mod model;
pub mod oracle;
pub mod train;

pub use error::{Error, Result};
pub use graph::{Graph, NodeOrdering};
