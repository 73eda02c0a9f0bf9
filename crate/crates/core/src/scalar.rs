//! Scalar abstraction for the numeric core.
//!
//! Every geometric and statistical quantity in this crate is generic over a
//! floating-point [`Scalar`] so the same code runs in `f32` or `f64`. The
//! crate-root aliases ([`crate::Real`] and friends) fix `f64` as the default
//! used by the IO layer and the CLI; the documented tolerances throughout the
//! crate are stated for `f64` and converted into the working scalar with
//! [`cst`].

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar the numeric core is generic over.
///
/// A blanket implementation covers every type with the listed bounds, in
/// particular `f32` and `f64`. The `Send + Sync` bounds let per-vertex work
/// run on a thread pool.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
}

impl<T> Scalar for T where
    T: Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Send + Sync + 'static
{
}

/// Convert an `f64` constant (tolerance, literal coefficient) into the
/// working scalar.
///
/// Panics only if the target type cannot represent any value near `x`, which
/// cannot happen for finite constants in `f32`/`f64`.
#[inline]
pub fn cst<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("finite f64 constant must convert into the scalar type")
}

/// Lossy view of a scalar as `f64`, used when reporting values in errors and
/// diagnostics.
#[inline]
pub fn as_f64<S: Scalar>(x: S) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `2^-level`, the factor by which stencil radii shrink per refinement level.
#[inline]
pub fn level_scale<S: Scalar>(level: u32) -> S {
    cst::<S>(0.5).powi(level as i32)
}
