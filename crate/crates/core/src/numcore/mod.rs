//! Dense tensors, a reverse-mode tape, and a finite-difference checker.

mod gradcheck;
mod graph;
mod ops;
mod tensor;

pub use gradcheck::{
    compare_gradients, grad_check, grad_check_except, relative_error, GradientReport,
};
pub use graph::{CustomOp, Gradients, Graph, NodeId, ParamId, ParamStore};
pub use ops::{elementwise, logsumexp, matmul, sigmoid, softmax, Pointwise};
pub use tensor::{gemm, MatView, Precision, Scalar, Tensor};
