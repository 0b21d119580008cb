//! Floating-point scalar abstraction shared by the kernel, objective and
//! optimizer code. Embeddings are always stored as `f32`; similarities and
//! objective values are accumulated in whichever `Scalar` the caller picks.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// f32 or f64
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts a literal or configuration value.
    fn of(x: f64) -> Self;
    /// Widens (or keeps) a stored embedding component.
    fn of_f32(x: f32) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn of_f32(x: f32) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }
    #[inline]
    fn of_f32(x: f32) -> Self {
        x as f64
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Dot product of two stored rows, accumulated in `T`.
#[inline]
pub fn dot<T: Scalar>(u: &[f32], v: &[f32]) -> T {
    debug_assert_eq!(u.len(), v.len());
    let mut acc = T::zero();
    for (a, b) in u.iter().zip(v) {
        acc += T::of_f32(*a) * T::of_f32(*b);
    }
    acc
}
