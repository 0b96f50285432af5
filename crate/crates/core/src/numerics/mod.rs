//! Dense tensors with reverse-mode differentiation.
//!
//! Everything is row-major and single-threaded. Reductions run left to right so
//! two runs with the same inputs produce bit-identical results.

mod adam;
mod gradcheck;
mod graph;
pub(crate) mod kernels;
mod scalar;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, GradCheckReport};
pub use graph::{Graph, Var};
pub use scalar::Scalar;
pub use tensor::Tensor;
