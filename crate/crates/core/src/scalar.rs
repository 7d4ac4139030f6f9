use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point element type of the sparse linear algebra and operator
/// builders. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from `f64`.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative pivot threshold below which a Cholesky pivot counts as zero.
    fn pivot_tolerance() -> Self {
        Self::of(1e-12).max(Self::epsilon() * Self::of(8.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
