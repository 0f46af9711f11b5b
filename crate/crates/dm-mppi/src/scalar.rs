use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating-point scalar the whole pipeline is generic over.
///
/// Everything numeric (dynamics, costs, weights, regression, the MLP) works
/// for any implementor; `f64` is the default used by the type aliases at the
/// crate root, `f32` exists for callers that want the smaller footprint.
pub trait Scalar:
    Float + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn from_usize(n: usize) -> Self {
        Self::from_f64(n as f64)
    }
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> f32 {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}
