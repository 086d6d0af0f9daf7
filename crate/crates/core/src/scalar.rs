//! Scalar abstraction shared by every numerical module.

use clarabel::algebra::FloatT;
use num_traits::Float;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating point type the library is generic over (implemented for `f32` and `f64`).
///
/// The bound is the conic backend's own float trait plus serde, so any scalar
/// accepted here can be handed to the solver without conversion.
pub trait Scalar: Float + FloatT + Serialize + DeserializeOwned + std::str::FromStr {
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self;

    fn to_f64(self) -> f64;
}

impl Scalar for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

pub(crate) fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm_inf<S: Scalar>(a: &[S]) -> S {
    a.iter().fold(S::zero(), |acc, &x| acc.max(x.abs()))
}
