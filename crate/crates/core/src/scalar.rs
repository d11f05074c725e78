use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};

/// Floating-point type usable throughout the scoring and statistics code.
///
/// Blanket-implemented; in practice `f32` (compact vector stores) or `f64`.
pub trait Scalar:
    Float + FromPrimitive + FromStr + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from a count or literal.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("finite f64 is representable")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("count is representable")
    }
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + FromStr + Sum + Default + Debug + Display + Send + Sync + 'static
{
}
