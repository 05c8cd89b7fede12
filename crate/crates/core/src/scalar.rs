//! Scalar abstraction shared by the pose math.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumCast};

/// Floating point scalar usable by [`crate::geom`] and everything built on it: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + NumCast + Default + Debug + Display + Send + Sync + 'static {
    /// Allowed deviation of a unit quaternion's norm from one.
    const UNIT_TOLERANCE: f64;

    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(value: f64) -> Self {
        <Self as NumCast>::from(value).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <f64 as NumCast>::from(self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn two() -> Self {
        Self::one() + Self::one()
    }

    #[inline]
    fn half() -> Self {
        Self::lit(0.5)
    }
}

impl Scalar for f32 {
    const UNIT_TOLERANCE: f64 = 1e-5;
}

impl Scalar for f64 {
    const UNIT_TOLERANCE: f64 = 1e-9;
}
