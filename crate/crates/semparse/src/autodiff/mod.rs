//! Tape-based reverse-mode automatic differentiation.

pub mod graph;
pub mod kernels;
pub mod params;
pub mod tensor;

pub use graph::{Graph, NodeId};
pub use params::{rmsprop_update, Param, ParamId, ParamStore};
pub use tensor::Tensor;
