//! Minimal reverse-mode automatic differentiation over dense `f64` tensors.

mod gradcheck;
mod tape;
mod tensor;

pub use gradcheck::{check_all_ops, grad_check, relative_error, DEFAULT_EPSILON};
pub use tape::{sigmoid, Propagation, Tape, Var, BCE_EPS, LAYER_NORM_EPS};
pub use tensor::Tensor;
