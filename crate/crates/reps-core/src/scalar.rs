//! Floating-point abstraction used by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Scalar type for all numerics: `f32` or `f64`.
///
/// The bound collects what the solvers actually use: IEEE float arithmetic,
/// compound assignment, summation, conversions, and thread-safety (the CLI
/// fans work out across threads).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Conversion from `f64` (exact for `f64`, rounds for `f32`).
    #[inline]
    fn from_real(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to any Scalar")
    }

    /// Widening conversion to `f64` (exact for both implementors).
    #[inline]
    fn to_real(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
