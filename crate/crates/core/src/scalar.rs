//! Scalar abstractions shared by every numerical module.
//!
//! [`Scalar`] covers exact field arithmetic (it is satisfied by rationals as
//! well as floats) and is enough for the algebraic lattice operations.
//! [`Real`] adds the transcendental functions needed by the solver, the
//! surface generator and the diagnostics.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, Num, NumCast};

/// Field-like number usable by the exact lattice algebra.
pub trait Scalar: Copy + PartialOrd + Num + FromPrimitive + Debug + Send + Sync + 'static {}

impl<T> Scalar for T where T: Copy + PartialOrd + Num + FromPrimitive + Debug + Send + Sync + 'static {}

/// Floating-point number (f32 or f64).
pub trait Real: Scalar + Float + FloatConst + NumCast + Sum + Display + LowerExp + Default {}

impl<T> Real for T where T: Scalar + Float + FloatConst + NumCast + Sum + Display + LowerExp + Default
{}

/// Exact ratio `num / den` in the target scalar type.
#[inline]
pub fn ratio<T: Scalar>(num: i64, den: i64) -> T {
    T::from_i64(num).expect("integer representable") / T::from_i64(den).expect("integer representable")
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("finite literal")
}

#[inline]
pub fn from_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("index representable")
}
