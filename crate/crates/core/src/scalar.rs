//! Scalar abstractions.
//!
//! Floating-point code is written against [`Real`] (implemented for `f32` and
//! `f64`). Characteristic-polynomial and adjugate computations only need field
//! operations and are written against [`Field`], which additionally admits exact
//! rationals such as [`ExactRational`].

use nalgebra::{ClosedAddAssign, ClosedMulAssign, ClosedSubAssign, RealField, Scalar};
use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Real floating-point scalar used by the numerical pipeline.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {
    /// Converts an `f64` literal. Panics only for values the type cannot hold.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the type.
    fn unit_roundoff() -> Self;
}

impl Real for f32 {
    fn unit_roundoff() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn unit_roundoff() -> Self {
        f64::EPSILON
    }
}

/// Field scalar: anything with exact or floating `+ - * /` that nalgebra can store.
pub trait Field:
    Scalar + Num + FromPrimitive + ClosedAddAssign + ClosedSubAssign + ClosedMulAssign
{
}

impl<T> Field for T where
    T: Scalar + Num + FromPrimitive + ClosedAddAssign + ClosedSubAssign + ClosedMulAssign
{
}

/// Arbitrary-precision rational, for exact coefficient checks.
pub type ExactRational = num_rational::BigRational;

/// Builds an exact rational `num/den`.
pub fn rational(num: i64, den: i64) -> ExactRational {
    ExactRational::new(num.into(), den.into())
}
