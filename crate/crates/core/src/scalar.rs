use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar for all solver math: f32 or f64.
pub trait Scalar:
    Float + NumAssign + FromPrimitive + ScalarOperand + Sum + Debug + Display + Send + Sync + 'static
{
    /// Shorthand for lossy conversion of literals and counts.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal must convert to scalar type")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize must convert to scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssign
        + FromPrimitive
        + ScalarOperand
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
