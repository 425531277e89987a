//! Scalar abstraction: every numeric kernel is generic over a float type.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};
use rustfft::FftNum;

/// Floating-point scalar usable everywhere in the crate: f32 or f64.
pub trait Scalar:
    Float
    + FloatConst
    + FftNum
    + FromPrimitive
    + NumAssign
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Send
    + Sync
    + Display
    + LowerExp
    + Debug
    + 'static
{
    /// Lossy conversion from `f64`; panics only for exotic types.
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 conversion")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("f64 conversion")
    }

    #[inline]
    fn of_usize(x: usize) -> Self {
        Self::from_usize(x).expect("usize conversion")
    }
}

impl<T> Scalar for T where
    T: Float
        + FloatConst
        + FftNum
        + FromPrimitive
        + NumAssign
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Send
        + Sync
        + Display
        + LowerExp
        + Debug
        + 'static
{
}
