//! Empirical verification of the scheme's core claims: stepwise linear
//! reproduction, second-order approximation, per-level noise damping, and
//! the error metrics used to compare against reference functions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point2, Rect};
use crate::mesh::{DataLevel, MeshError, Triangulation2};
use crate::scalar::{as_f64, cst, Scalar};
use crate::wls::{RefinementOperator, Scheme, WlsError};

/// Errors from the analysis routines.
#[derive(Debug, Error)]
pub enum AnalysisError {
    /// A value vector does not match the vertex count it describes.
    #[error("got {values} values for {vertices} vertices")]
    LengthMismatch { values: usize, vertices: usize },
    /// A region filter selected no vertices.
    #[error("the region selects no vertices")]
    EmptyRegion,
    /// Too few Monte Carlo trials for a meaningful variance estimate.
    #[error("variance estimation needs at least {MIN_TRIALS} trials, got {got}")]
    TooFewTrials { got: u32 },
    /// Too few scales to fit a convergence rate.
    #[error("rate estimation needs at least 3 scales, got {got}")]
    TooFewScales { got: usize },
    /// A scale or radius factor that is not a positive finite number.
    #[error("{name} must be a positive finite number, got {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    /// The noise level must be finite and non-negative.
    #[error("noise standard deviation must be finite and non-negative, got {sd}")]
    InvalidNoise { sd: f64 },
    /// No vertex survived the interior margin at one of the tested scales.
    #[error("no vertex is further than {margin} from the boundary at scale {scale}")]
    NoInteriorVertices { scale: f64, margin: f64 },
    #[error(transparent)]
    Wls(#[from] WlsError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Minimum trial count accepted by [`noise_variance_trial`].
pub const MIN_TRIALS: u32 = 100;

/// Deviation of a value vector from a reference function over a region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics<S> {
    /// Root-mean-square deviation over the selected vertices.
    pub e2: S,
    /// Maximum absolute deviation over the selected vertices.
    pub einf: S,
    /// Number of vertices the region selected.
    pub count: usize,
}

/// Compute [`ErrorMetrics`] of `values` against `reference` over the
/// vertices inside `region`.
pub fn error_metrics<S: Scalar>(
    vertices: &[Point2<S>],
    values: &[S],
    reference: impl Fn(Point2<S>) -> S,
    region: &Rect<S>,
) -> Result<ErrorMetrics<S>, AnalysisError> {
    if vertices.len() != values.len() {
        return Err(AnalysisError::LengthMismatch {
            values: values.len(),
            vertices: vertices.len(),
        });
    }
    let mut sum_sq = S::zero();
    let mut max_abs = S::zero();
    let mut count = 0usize;
    for (&v, &z) in vertices.iter().zip(values) {
        if region.contains(v) {
            let d = z - reference(v);
            sum_sq += d * d;
            max_abs = max_abs.max(d.abs());
            count += 1;
        }
    }
    if count == 0 {
        return Err(AnalysisError::EmptyRegion);
    }
    Ok(ErrorMetrics {
        e2: (sum_sq / cst(count as f64)).sqrt(),
        einf: max_abs,
        count,
    })
}

/// Maximum child-vertex deviation after one refinement of the linear
/// polynomial `a0 + a1·x + a2·y` sampled on `tri`.
///
/// The scheme reproduces linear polynomials stepwise, so the returned error
/// is at rounding level (≲1e-10) for every valid mesh and admissible radius.
pub fn check_reproduction<S: Scalar>(
    scheme: &Scheme<S>,
    tri: &Triangulation2<S>,
    base_l: S,
    (a0, a1, a2): (S, S, S),
) -> Result<S, AnalysisError> {
    let p = |v: Point2<S>| a0 + a1 * v.x + a2 * v.y;
    let values = tri.vertices().iter().map(|&v| p(v)).collect();
    let level = DataLevel::new(tri.clone(), values, 0, base_l)?;
    let child = scheme.refine_step(&level)?;
    let worst = child
        .tri
        .vertices()
        .iter()
        .zip(&child.values)
        .map(|(&v, &z)| (z - p(v)).abs())
        .fold(S::zero(), |m, d| m.max(d));
    Ok(worst)
}

/// Largest one-step noise variance amplification `Σ α²` over the level's
/// refinement rules, optionally restricted to child vertices inside
/// `region`.
///
/// Stencils near a finite patch's boundary are truncated and amplify more
/// than interior ones, so restricting to an interior region is how the
/// stationary interior factor of a grid is measured. A rule with a single
/// member would give exactly 1 (its only coefficient is 1); rules over a
/// uniform stencil of n equally weighted members give exactly `1/n`.
pub fn theta<S: Scalar>(
    scheme: &Scheme<S>,
    level: &DataLevel<S>,
    region: Option<&Rect<S>>,
) -> Result<S, AnalysisError> {
    let (child_tri, _) = level.tri.midpoint_refine();
    let operator = scheme.refinement_operator(level, child_tri.vertices())?;
    max_variance_factor(&operator, child_tri.vertices(), region)
}

/// Maximum `Σ α²` over the operator rows whose child vertex lies in
/// `region` (all rows when `region` is `None`).
fn max_variance_factor<S: Scalar>(
    operator: &RefinementOperator<S>,
    children: &[Point2<S>],
    region: Option<&Rect<S>>,
) -> Result<S, AnalysisError> {
    let mut best: Option<S> = None;
    for (child, &v) in children.iter().enumerate() {
        if region.map_or(true, |r| r.contains(v)) {
            let factor = operator.row_variance_factor(child);
            best = Some(best.map_or(factor, |b: S| b.max(factor)));
        }
    }
    best.ok_or(AnalysisError::EmptyRegion)
}

/// Per-level empirical variance ratio from a Monte Carlo noise trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceRatio<S> {
    /// Refinement level the ratio was measured at (1 = one step).
    pub level: u32,
    /// Largest per-vertex empirical variance divided by the input variance.
    pub max_ratio: S,
    /// Number of vertices the ratio was maximized over.
    pub vertices: usize,
}

/// Result of a Monte Carlo noise-propagation trial.
///
/// Pure noise (zero-mean iid Gaussian samples) is pushed through the
/// refinement operators; `per_level[k]` reports how the worst per-vertex
/// variance at level `k+1` compares with the input variance. One step damps
/// variance by at most [`NoiseReport::theta`]; deeper levels stay at or
/// below the input variance even though values become correlated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport<S> {
    /// Largest `Σ α²` over the measured level-1 rules.
    pub theta: S,
    /// Empirical worst-case variance ratios per level, shallowest first.
    pub per_level: Vec<VarianceRatio<S>>,
    /// Rules feeding the measured vertices that contain a negative
    /// coefficient. The variance bound assumes non-negative coefficients,
    /// so it is only guaranteed when this is zero.
    pub negative_rows: usize,
    /// Number of Monte Carlo trials.
    pub trials: u32,
    /// Standard deviation of the injected noise.
    pub noise_sd: f64,
}

impl<S> NoiseReport<S> {
    /// Whether the `theta` variance bound applies: every rule feeding the
    /// measured vertices had non-negative coefficients.
    pub fn theta_bound_applicable(&self) -> bool {
        self.negative_rows == 0
    }
}

/// Trials per parallel chunk. Fixed so chunk boundaries — and therefore the
/// merged sums — do not depend on thread count.
const TRIAL_CHUNK: u32 = 25;

/// Monte Carlo estimate of how iid Gaussian noise propagates through
/// `levels` refinement steps on `tri`.
///
/// Each trial draws noise from its own counter-derived stream of a seeded
/// generator, so reports are bit-reproducible for a given `seed` and
/// independent of thread count. When `region` is given, ratios (and the
/// negative-coefficient count) are restricted to the rules feeding vertices
/// inside it, which excludes truncated boundary stencils.
#[allow(clippy::too_many_arguments)]
pub fn noise_variance_trial<S: Scalar>(
    scheme: &Scheme<S>,
    tri: &Triangulation2<S>,
    base_l: S,
    levels: u32,
    noise_sd: f64,
    trials: u32,
    seed: u64,
    region: Option<&Rect<S>>,
) -> Result<NoiseReport<S>, AnalysisError> {
    if trials < MIN_TRIALS {
        return Err(AnalysisError::TooFewTrials { got: trials });
    }
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return Err(AnalysisError::InvalidNoise { sd: noise_sd });
    }
    if levels == 0 {
        return Err(AnalysisError::InvalidParameter {
            name: "levels",
            value: 0.0,
        });
    }

    // The operators depend on geometry only, so build the whole chain once
    // with placeholder values.
    let mut operators: Vec<RefinementOperator<S>> = Vec::with_capacity(levels as usize);
    let mut masks: Vec<Vec<bool>> = Vec::with_capacity(levels as usize);
    let mut current = DataLevel::new(tri.clone(), vec![S::zero(); tri.vertices().len()], 0, base_l)?;
    for k in 0..levels {
        let (child_tri, _) = current.tri.midpoint_refine();
        let operator = scheme.refinement_operator(&current, child_tri.vertices())?;
        masks.push(
            child_tri
                .vertices()
                .iter()
                .map(|&v| region.map_or(true, |r| r.contains(v)))
                .collect(),
        );
        operators.push(operator);
        let count = child_tri.vertices().len();
        current = DataLevel::new(child_tri, vec![S::zero(); count], k + 1, base_l)?;
    }
    if masks.iter().any(|m| !m.iter().any(|&b| b)) {
        return Err(AnalysisError::EmptyRegion);
    }

    let theta = {
        let mut best: Option<S> = None;
        for (child, &keep) in masks[0].iter().enumerate() {
            if keep {
                let f = operators[0].row_variance_factor(child);
                best = Some(best.map_or(f, |b: S| b.max(f)));
            }
        }
        best.ok_or(AnalysisError::EmptyRegion)?
    };

    // Rules feeding the measured vertices: walk dependencies backwards from
    // every measured level, then count those rules with a negative entry.
    let mut needed: Vec<Vec<bool>> = masks.clone();
    for k in (0..levels as usize - 1).rev() {
        let (child_needed, parent_needed) = {
            let (head, tail) = needed.split_at_mut(k + 1);
            (&tail[0], &mut head[k])
        };
        for (child, &need) in child_needed.iter().enumerate() {
            if need {
                for &parent in operators[k + 1].row(child).0 {
                    parent_needed[parent] = true;
                }
            }
        }
    }
    let negative_rows: usize = operators
        .iter()
        .zip(&needed)
        .map(|(op, need)| {
            (0..op.child_count())
                .filter(|&r| need[r] && op.row(r).1.iter().any(|&a| a < S::zero()))
                .count()
        })
        .sum();

    let level_sizes: Vec<usize> = masks.iter().map(|m| m.len()).collect();
    let mut sum_sq: Vec<Vec<S>> = level_sizes.iter().map(|&n| vec![S::zero(); n]).collect();
    if noise_sd > 0.0 {
        let normal = Normal::new(0.0, noise_sd).expect("validated above");
        let parent_count = tri.vertices().len();
        let chunk_starts: Vec<u32> = (0..trials).step_by(TRIAL_CHUNK as usize).collect();
        let partials: Vec<Vec<Vec<S>>> = chunk_starts
            .par_iter()
            .map(|&start| {
                let end = (start + TRIAL_CHUNK).min(trials);
                let mut acc: Vec<Vec<S>> =
                    level_sizes.iter().map(|&n| vec![S::zero(); n]).collect();
                for trial in start..end {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(u64::from(trial));
                    let mut x: Vec<S> = (0..parent_count)
                        .map(|_| cst(normal.sample(&mut rng)))
                        .collect();
                    for (op, level_acc) in operators.iter().zip(&mut acc) {
                        x = op.apply(&x);
                        for (a, &xi) in level_acc.iter_mut().zip(&x) {
                            *a += xi * xi;
                        }
                    }
                }
                acc
            })
            .collect();
        for partial in partials {
            for (total, part) in sum_sq.iter_mut().zip(partial) {
                for (t, p) in total.iter_mut().zip(part) {
                    *t += p;
                }
            }
        }
    }

    let variance_in = cst::<S>(noise_sd * noise_sd);
    let per_level = sum_sq
        .iter()
        .zip(&masks)
        .enumerate()
        .map(|(k, (sums, mask))| {
            let vertices = mask.iter().filter(|&&b| b).count();
            let max_ratio = if noise_sd == 0.0 {
                S::zero()
            } else {
                sums.iter()
                    .zip(mask)
                    .filter(|&(_, &keep)| keep)
                    .map(|(&s, _)| s / cst::<S>(f64::from(trials)) / variance_in)
                    .fold(S::zero(), |m, r| m.max(r))
            };
            VarianceRatio {
                level: k as u32 + 1,
                max_ratio,
                vertices,
            }
        })
        .collect();

    Ok(NoiseReport {
        theta,
        per_level,
        negative_rows,
        trials,
        noise_sd,
    })
}

/// Sup errors of the subdivided samples of a function at a ladder of mesh
/// scales, with the fitted convergence rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport<S> {
    /// Tested mesh scales `h`, in input order.
    pub scales: Vec<S>,
    /// Interior sup error at each scale.
    pub errors: Vec<S>,
    /// Least-squares slope of `log₂ error` against `log₂ h`; `None` when
    /// the errors are at rounding level (e.g. for linear functions, which
    /// the scheme reproduces exactly).
    pub slope: Option<S>,
}

/// Errors below this are treated as exact reproduction and excluded from
/// rate fitting.
const RATE_FLOOR: f64 = 1e-12;

/// Estimate the approximation order of the scheme for a smooth function.
///
/// For each scale `h`, the `template` mesh is scaled by `h` around `center`
/// (vertex ↦ `center + h·vertex`), `f` is sampled at its vertices, the
/// samples are subdivided `iterations` times with ball radius
/// `radius_factor·h`, and the sup deviation from `f` is measured at the
/// finest vertices. Only vertices further than twice the ball radius from
/// the boundary count, so truncated boundary stencils cannot pollute the
/// rate; the fitted slope is ≈2 for C² functions.
///
/// As `h` shrinks, the probed domain concentrates at `center`, so the
/// leading error constant is governed by the second derivatives of `f`
/// there. Pick a `center` where they do not all vanish — probing
/// `sin(x)·cos(y)` at the origin, for example, measures a spuriously high
/// order because the quadratic term of its Taylor expansion is zero there.
pub fn estimate_approximation_order<S: Scalar>(
    scheme: &Scheme<S>,
    template: &Triangulation2<S>,
    center: Point2<S>,
    f: impl Fn(Point2<S>) -> S,
    scales: &[S],
    iterations: u32,
    radius_factor: S,
) -> Result<RateReport<S>, AnalysisError> {
    if scales.len() < 3 {
        return Err(AnalysisError::TooFewScales { got: scales.len() });
    }
    for &h in scales {
        if !(h > S::zero() && h.is_finite()) {
            return Err(AnalysisError::InvalidParameter {
                name: "scale",
                value: as_f64(h),
            });
        }
    }
    if !(radius_factor > S::zero() && radius_factor.is_finite()) {
        return Err(AnalysisError::InvalidParameter {
            name: "radius_factor",
            value: as_f64(radius_factor),
        });
    }

    let face_counts = template.edge_face_counts();
    let boundary_edges: Vec<(usize, usize)> = template
        .edges()
        .iter()
        .zip(&face_counts)
        .filter(|&(_, &c)| c == 1)
        .map(|(&e, _)| e)
        .collect();

    let mut errors = Vec::with_capacity(scales.len());
    for &h in scales {
        let vertices: Vec<Point2<S>> = template
            .vertices()
            .iter()
            .map(|&v| center + v.scale(h))
            .collect();
        let boundary: Vec<(Point2<S>, Point2<S>)> = boundary_edges
            .iter()
            .map(|&(a, b)| (vertices[a], vertices[b]))
            .collect();
        let tri = Triangulation2::new(vertices, template.faces().to_vec())?;
        let base_l = radius_factor * h;
        let margin = cst::<S>(2.0) * base_l;
        let values = tri.vertices().iter().map(|&v| f(v)).collect();
        let level = DataLevel::new(tri, values, 0, base_l)?;
        let fine = scheme.subdivide(&level, iterations)?;
        let mut worst = S::zero();
        let mut interior = 0usize;
        for (&v, &z) in fine.tri.vertices().iter().zip(&fine.values) {
            if distance_to_boundary(v, &boundary) > margin {
                interior += 1;
                worst = worst.max((z - f(v)).abs());
            }
        }
        if interior == 0 {
            return Err(AnalysisError::NoInteriorVertices {
                scale: as_f64(h),
                margin: as_f64(margin),
            });
        }
        errors.push(worst);
    }

    let floor = cst::<S>(RATE_FLOOR);
    let slope = if errors.iter().any(|&e| e <= floor) {
        None
    } else {
        Some(log_log_slope(scales, &errors))
    };
    Ok(RateReport {
        scales: scales.to_vec(),
        errors,
        slope,
    })
}

/// Least-squares slope of `log₂ errors` against `log₂ scales`.
fn log_log_slope<S: Scalar>(scales: &[S], errors: &[S]) -> S {
    let n = cst::<S>(scales.len() as f64);
    let ln2 = cst::<S>(std::f64::consts::LN_2);
    let mut sx = S::zero();
    let mut sy = S::zero();
    let mut sxx = S::zero();
    let mut sxy = S::zero();
    for (&h, &e) in scales.iter().zip(errors) {
        let x = h.ln() / ln2;
        let y = e.ln() / ln2;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Distance from `p` to the nearest of the given segments. Returns infinity
/// when there are no segments (a closed mesh has no boundary).
fn distance_to_boundary<S: Scalar>(p: Point2<S>, segments: &[(Point2<S>, Point2<S>)]) -> S {
    segments
        .iter()
        .map(|&(a, b)| distance_to_segment(p, a, b))
        .fold(S::infinity(), |m, d| m.min(d))
}

fn distance_to_segment<S: Scalar>(p: Point2<S>, a: Point2<S>, b: Point2<S>) -> S {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq == S::zero() {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len_sq).max(S::zero()).min(S::one());
    p.dist(a + ab.scale(t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::masks::UniformGrid;
    use crate::meshgen::{jittered_patch, scattered_mesh, ScatterConfig};
    use crate::weights::WeightFunction;

    fn unit_region() -> Rect<f64> {
        Rect::from_bounds(-1.0, -1.0, 1.0, 1.0)
    }

    fn equilateral_level(half_width: i64, base_l: f64) -> DataLevel<f64> {
        let patch = UniformGrid::<f64>::equilateral().patch(half_width);
        let values = vec![0.0; patch.tri.vertices().len()];
        DataLevel::new(patch.tri, values, 0, base_l).unwrap()
    }

    #[test]
    fn error_metrics_zero_for_exact_values_and_shift_for_offsets() {
        let patch = UniformGrid::<f64>::equilateral().patch(3);
        let f = |v: Point2<f64>| 0.5 * v.x - v.y;
        let exact: Vec<f64> = patch.tri.vertices().iter().map(|&v| f(v)).collect();
        let m = error_metrics(patch.tri.vertices(), &exact, f, &unit_region()).unwrap();
        assert_eq!(m.e2, 0.0);
        assert_eq!(m.einf, 0.0);
        assert!(m.count > 0);

        let shifted: Vec<f64> = exact.iter().map(|z| z + 0.25).collect();
        let m = error_metrics(patch.tri.vertices(), &shifted, f, &unit_region()).unwrap();
        assert!((m.e2 - 0.25).abs() <= 1e-15);
        assert!((m.einf - 0.25).abs() <= 1e-15);
    }

    #[test]
    fn error_metrics_rejects_empty_regions_and_mismatched_lengths() {
        let patch = UniformGrid::<f64>::equilateral().patch(2);
        let values = vec![0.0; patch.tri.vertices().len()];
        let offside = Rect::from_bounds(50.0, 50.0, 51.0, 51.0);
        assert!(matches!(
            error_metrics(patch.tri.vertices(), &values, |_| 0.0, &offside),
            Err(AnalysisError::EmptyRegion)
        ));
        assert!(matches!(
            error_metrics(patch.tri.vertices(), &values[..3], |_| 0.0, &unit_region()),
            Err(AnalysisError::LengthMismatch { values: 3, .. })
        ));
    }

    #[test]
    fn linear_polynomials_are_reproduced_on_irregular_meshes() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let grid = UniformGrid::<f64>::equilateral();
        let jittered = jittered_patch(&grid, 4, 0.3, 3).unwrap();
        let err = check_reproduction(&scheme, &jittered, 1.6, (1.0, 0.0, 0.0)).unwrap();
        assert!(err <= 1e-12, "constant reproduction error {err}");

        let scattered = scattered_mesh::<f64>(&ScatterConfig::default(), 100).unwrap();
        let hat = Scheme::new(WeightFunction::Hat);
        let err = check_reproduction(&hat, &scattered, 1.0, (2.0, 3.0, -5.0)).unwrap();
        assert!(err <= 1e-10, "linear reproduction error {err}");
    }

    #[test]
    fn quadratics_are_not_reproduced_in_one_step() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let patch = UniformGrid::<f64>::equilateral().patch(3);
        let values: Vec<f64> = patch.tri.vertices().iter().map(|v| v.x * v.x).collect();
        let level = DataLevel::new(patch.tri.clone(), values, 0, 1.6).unwrap();
        let child = scheme.refine_step(&level).unwrap();
        let interior = unit_region();
        let worst = child
            .tri
            .vertices()
            .iter()
            .zip(&child.values)
            .filter(|&(&v, _)| interior.contains(v))
            .map(|(&v, &z)| (z - v.x * v.x).abs())
            .fold(0.0f64, f64::max);
        assert!(
            worst > 0.1 && worst < 1.2,
            "quadratic one-step error should be O(h²), got {worst}"
        );
    }

    #[test]
    fn interior_theta_matches_the_uniform_grid_factors_exactly() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let eq = equilateral_level(5, 1.6);
        let t = theta(&scheme, &eq, Some(&unit_region())).unwrap();
        assert_eq!(t, 1.0 / 7.0);

        let rect_patch = UniformGrid::<f64>::rectangular().patch(5);
        let values = vec![0.0; rect_patch.tri.vertices().len()];
        let rect = DataLevel::new(rect_patch.tri, values, 0, 1.7).unwrap();
        let t = theta(&scheme, &rect, Some(&unit_region())).unwrap();
        assert_eq!(t, 1.0 / 8.0);
    }

    #[test]
    fn boundary_rules_amplify_more_than_interior_ones() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let eq = equilateral_level(5, 1.6);
        let interior = theta(&scheme, &eq, Some(&unit_region())).unwrap();
        let everywhere = theta(&scheme, &eq, None).unwrap();
        assert!(
            everywhere > interior,
            "truncated boundary stencils should raise the factor: {everywhere} vs {interior}"
        );
    }

    #[test]
    fn noise_variance_respects_the_theta_bound() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let eq = equilateral_level(5, 1.6);
        let region = unit_region();
        let trials = 400;
        let report = noise_variance_trial(
            &scheme, &eq.tri, 1.6, 3, 1.0, trials, 7, Some(&region),
        )
        .unwrap();
        assert_eq!(report.theta, 1.0 / 7.0);
        assert!(report.theta_bound_applicable(), "negative rows: {}", report.negative_rows);
        let se = (2.0 / (f64::from(trials) - 1.0)).sqrt();
        let level1 = &report.per_level[0];
        assert!(
            level1.max_ratio <= report.theta * (1.0 + 3.0 * se),
            "level-1 ratio {} above {}",
            level1.max_ratio,
            report.theta * (1.0 + 3.0 * se)
        );
        for r in &report.per_level {
            assert!(
                r.max_ratio <= 1.0 + 3.0 * se,
                "level-{} ratio {} above the variance of the input",
                r.level,
                r.max_ratio
            );
        }
        println!(
            "ratios: {:?}",
            report.per_level.iter().map(|r| r.max_ratio).collect::<Vec<_>>()
        );
    }

    #[test]
    fn noise_reports_are_bit_reproducible_and_validate_inputs() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let eq = equilateral_level(3, 1.6);
        let a = noise_variance_trial(&scheme, &eq.tri, 1.6, 2, 0.5, 120, 99, None).unwrap();
        let b = noise_variance_trial(&scheme, &eq.tri, 1.6, 2, 0.5, 120, 99, None).unwrap();
        assert_eq!(a, b);

        let zero = noise_variance_trial(&scheme, &eq.tri, 1.6, 2, 0.0, 120, 99, None).unwrap();
        assert!(zero.per_level.iter().all(|r| r.max_ratio == 0.0));

        assert!(matches!(
            noise_variance_trial(&scheme, &eq.tri, 1.6, 2, 1.0, 50, 0, None),
            Err(AnalysisError::TooFewTrials { got: 50 })
        ));
    }

    #[test]
    fn smooth_functions_subdivide_at_second_order() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let template = UniformGrid::<f64>::equilateral().patch(5).tri;
        let scales = [0.4, 0.2, 0.1];
        let report = estimate_approximation_order(
            &scheme,
            &template,
            Point2::new(std::f64::consts::FRAC_PI_2, 0.0),
            |v| v.x.sin() * v.y.cos(),
            &scales,
            3,
            1.6,
        )
        .unwrap();
        let slope = report.slope.expect("nonlinear errors should fit a slope");
        assert!(
            (1.8..=2.2).contains(&slope),
            "slope {slope}, errors {:?}",
            report.errors
        );

        let quad = estimate_approximation_order(
            &scheme,
            &template,
            Point2::zero(),
            |v| v.x * v.x + v.y * v.y,
            &scales,
            3,
            1.6,
        )
        .unwrap();
        let slope = quad.slope.expect("quadratic errors should fit a slope");
        assert!((1.8..=2.2).contains(&slope), "quadratic slope {slope}");
    }

    #[test]
    fn linear_functions_report_no_slope() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let template = UniformGrid::<f64>::equilateral().patch(4).tri;
        let report = estimate_approximation_order(
            &scheme,
            &template,
            Point2::new(0.3, -0.2),
            |v| 1.0 + 2.0 * v.x - v.y,
            &[0.4, 0.2, 0.1],
            2,
            1.6,
        )
        .unwrap();
        assert!(report.slope.is_none());
        assert!(report.errors.iter().all(|&e| e <= 1e-12));
    }

    #[test]
    fn rate_estimation_validates_scales_and_interior_margins() {
        let scheme = Scheme::new(WeightFunction::Constant);
        let template = UniformGrid::<f64>::equilateral().patch(4).tri;
        assert!(matches!(
            estimate_approximation_order(
                &scheme,
                &template,
                Point2::zero(),
                |v| v.x,
                &[0.4, 0.2],
                2,
                1.6
            ),
            Err(AnalysisError::TooFewScales { got: 2 })
        ));
        let narrow = UniformGrid::<f64>::equilateral().patch(2).tri;
        assert!(matches!(
            estimate_approximation_order(
                &scheme,
                &narrow,
                Point2::zero(),
                |v| v.x,
                &[0.4, 0.2, 0.1],
                1,
                1.6
            ),
            Err(AnalysisError::NoInteriorVertices { .. })
        ));
    }
}
