//! Scalar abstraction for the numeric kernels.
//!
//! Everything in this crate is generic over a floating-point [`Scalar`] so
//! the same code runs in `f32`, `f64`, or any wrapper type with the required
//! `num_traits` surface (test builds use a counting wrapper to audit the
//! per-call operation budget of the fast kernels).

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the solvers and kernels are generic over.
///
/// Blanket-implemented; `f32` and `f64` qualify out of the box.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + NumAssign
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// Conversion from `f64`, used for constants and tolerances.
pub(crate) fn cast<T: Scalar>(x: f64) -> T {
    T::from_f64(x).expect("constant not representable in scalar type")
}

/// Conversion from an index value (grid position, coefficient multiple).
pub(crate) fn cast_index<T: Scalar>(k: usize) -> T {
    T::from_usize(k).expect("index not representable in scalar type")
}

/// Value as `f64` for reporting, regardless of the scalar type.
pub(crate) fn to_f64<T: Scalar>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
