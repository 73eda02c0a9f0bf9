//! Weight functions that grade stencil members by normalized distance.
//!
//! A weight function `W` maps the normalized distance `t = d / r` of a
//! stencil member (distance to the stencil center over the stencil radius)
//! to a positive weight. Members always satisfy `d < r` strictly, so the
//! domain is `[0, 1)` and every value must lie in `(0, 1]`: weights never
//! vanish inside the stencil, which keeps the weighted fits well posed.
//!
//! The scattered-data baselines in [`crate::baselines`] use the same shapes
//! under a different convention — extended by zero beyond `t = 1` — via
//! [`WeightFunction::eval_zero_extended`]. The two conventions are kept as
//! separate entry points on purpose: stencil evaluation treats an argument
//! outside `[0, 1)` as a hard error, never as "weight zero".

use thiserror::Error;

use crate::scalar::{as_f64, cst, level_scale, Scalar};

/// Steepness of the truncated Gaussian bell: `W(t) = exp(-(GAUSSIAN_STEEPNESS * t)^2 / 2)`.
///
/// With steepness 2.5 the weight falls to about 0.044 as `t` approaches 1,
/// so truncation at the stencil boundary introduces only a small jump.
pub const GAUSSIAN_STEEPNESS: f64 = 2.5;

/// Errors from constructing or evaluating weight functions.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum WeightError {
    /// The normalized distance fell outside `[0, 1)`. Stencil membership is
    /// strict, so this indicates a caller bug rather than a boundary case.
    #[error("normalized distance {t} outside the weight domain [0, 1)")]
    OutsideUnitDomain { t: f64 },
    /// A tabulated weight needs at least two samples to interpolate.
    #[error("weight table has {len} samples but needs at least 2")]
    TableTooShort { len: usize },
    /// Tabulated values must be positive and at most 1.
    #[error("weight table sample {index} is {value}, outside (0, 1]")]
    TableValueOutOfRange { index: usize, value: f64 },
    /// The stencil radius must be positive and finite.
    #[error("stencil radius {radius} is not positive and finite")]
    InvalidRadius { radius: f64 },
}

/// Positive samples on the uniform grid `t_i = i / (n - 1)` over `[0, 1]`,
/// evaluated by linear interpolation.
///
/// The final sample (at `t = 1`) only ever acts as an interpolation endpoint
/// for strict-domain evaluation, but it must still lie in `(0, 1]` so the
/// interpolant stays positive on all of `[0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTable<S> {
    samples: Vec<S>,
}

impl<S: Scalar> WeightTable<S> {
    pub fn new(samples: Vec<S>) -> Result<Self, WeightError> {
        if samples.len() < 2 {
            return Err(WeightError::TableTooShort {
                len: samples.len(),
            });
        }
        for (index, &v) in samples.iter().enumerate() {
            if !(v > S::zero() && v <= S::one()) {
                return Err(WeightError::TableValueOutOfRange {
                    index,
                    value: as_f64(v),
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[S] {
        &self.samples
    }

    /// Piecewise-linear value at `t`, assuming `0 <= t <= 1`.
    fn interpolate(&self, t: S) -> S {
        let n = self.samples.len();
        let pos = t * cst::<S>((n - 1) as f64);
        let cell = pos.floor();
        let i = num_traits::ToPrimitive::to_usize(&cell).unwrap_or(0).min(n - 2);
        let frac = pos - cst::<S>(i as f64);
        self.samples[i] + (self.samples[i + 1] - self.samples[i]) * frac
    }
}

/// Distance-grading profile for stencil weights.
#[derive(Clone, Debug, PartialEq)]
pub enum WeightFunction<S> {
    /// `W(t) = 1`: plain unweighted least squares.
    Constant,
    /// `W(t) = 1 - t`: linear decay to zero at the stencil boundary.
    Hat,
    /// `W(t) = exp(-(2.5 t)^2 / 2)`: truncated Gaussian bell.
    Gaussian,
    /// Piecewise-linear interpolation of user-supplied samples.
    Tabulated(WeightTable<S>),
}

impl<S: Scalar> WeightFunction<S> {
    /// Evaluate at normalized distance `t` in the strict stencil domain
    /// `[0, 1)`. Values are guaranteed to lie in `(0, 1]`.
    pub fn eval_unit(&self, t: S) -> Result<S, WeightError> {
        if !(t >= S::zero() && t < S::one()) {
            return Err(WeightError::OutsideUnitDomain { t: as_f64(t) });
        }
        Ok(self.eval_closed(t))
    }

    /// Evaluate under the scattered-data convention: the profile on `[0, 1]`
    /// extended by zero for `t > 1`.
    ///
    /// Unlike [`eval_unit`](Self::eval_unit) this never fails: sites beyond
    /// the bandwidth simply stop contributing. The value at `t = 1` is the
    /// closed-form boundary value (0 for the hat), so the extension is
    /// continuous exactly when the profile vanishes at 1.
    pub fn eval_zero_extended(&self, t: S) -> S {
        debug_assert!(t >= S::zero(), "normalized distances are non-negative");
        if t > S::one() {
            S::zero()
        } else {
            self.eval_closed(t)
        }
    }

    /// Closed-form value on `[0, 1]`, shared by both conventions.
    fn eval_closed(&self, t: S) -> S {
        match self {
            WeightFunction::Constant => S::one(),
            WeightFunction::Hat => S::one() - t,
            WeightFunction::Gaussian => {
                let a = cst::<S>(GAUSSIAN_STEEPNESS) * t;
                (-a * a * cst::<S>(0.5)).exp()
            }
            WeightFunction::Tabulated(table) => table.interpolate(t),
        }
    }

    /// Short human-readable name, used in provenance records and reports.
    pub fn describe(&self) -> String {
        match self {
            WeightFunction::Constant => "constant".to_owned(),
            WeightFunction::Hat => "hat".to_owned(),
            WeightFunction::Gaussian => "gaussian".to_owned(),
            WeightFunction::Tabulated(t) => format!("table({} samples)", t.samples.len()),
        }
    }
}

/// Weight of a stencil member at `distance` from the center of a stencil at
/// refinement level `level` with base radius `base_l`.
///
/// The effective stencil radius is `base_l * 2^-level`; the weight is
/// `W(distance / radius)` and requires `distance < radius` strictly.
pub fn evaluate_weight<S: Scalar>(
    weight: &WeightFunction<S>,
    distance: S,
    level: u32,
    base_l: S,
) -> Result<S, WeightError> {
    if !(base_l > S::zero() && base_l.is_finite()) {
        return Err(WeightError::InvalidRadius {
            radius: as_f64(base_l),
        });
    }
    let radius = base_l * level_scale::<S>(level);
    weight.eval_unit(distance / radius)
}
