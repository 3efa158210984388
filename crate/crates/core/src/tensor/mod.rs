//! Dense tensors and reverse-mode differentiation.

mod dense;
mod element;
mod gradcheck;
mod graph;
mod ops;

pub use dense::Tensor;
pub use element::{DType, Element, MatMut, MatRef};
pub use gradcheck::grad_check;
pub use graph::{BackwardArgs, BackwardFn, Graph, Var};
pub use ops::{ArgReduce, BinaryKind, ReduceKind, UnaryKind};
