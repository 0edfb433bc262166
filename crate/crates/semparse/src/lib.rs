//! Weakly supervised semantic parsing over small knowledge bases:
//! sequence-to-sequence parsers trained from denotations with policy
//! gradients, distilled into a single multi-domain model.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod harness;
pub mod lang;
pub mod model;
pub mod train;
pub mod scalar;
pub mod vocab;

pub use error::{AutodiffError, DataError, HarnessError, LangError, ModelError, TrainError};
pub use scalar::Scalar;

/// Default scalar type used by the executables and experiment harness.
pub type F = f64;
/// Tensor over the default scalar.
pub type Tensor = autodiff::Tensor<F>;
/// Tape over the default scalar.
pub type Graph = autodiff::Graph<F>;
/// Parameter store over the default scalar.
pub type ParamStore = autodiff::ParamStore<F>;
