//! Dense tensors and a small reverse-mode differentiation engine.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{finite_diff_check, relative_error, GradCheckReport};
pub use graph::{sigmoid, Graph, Var};
pub use tensor::{log_softmax_slice, logsumexp_slice, Tensor};
