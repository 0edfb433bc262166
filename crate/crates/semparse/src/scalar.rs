//! Scalar abstraction for the numeric core.
//!
//! The tensor engine, the sequence model and the trainers are generic over
//! the element type so the same code runs in `f32` or `f64`. Gradient
//! checking and the experiment defaults use `f64`; the crate root exports
//! concrete aliases for both precisions.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Element type of tensors, parameters and losses.
pub trait Scalar:
    Float + NumAssignOps + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` for constants and RNG draws.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 constant must convert")
    }

    /// Widening conversion used by serialization and metrics.
    fn to_f64_c(self) -> f64 {
        self.to_f64().expect("scalar must convert to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_through_f64_is_exact_for_both_precisions() {
        let x32: f32 = 0.1;
        assert_eq!(f32::from_f64_c(x32.to_f64_c()), x32);
        let x64: f64 = 0.1;
        assert_eq!(f64::from_f64_c(x64.to_f64_c()), x64);
    }
}
