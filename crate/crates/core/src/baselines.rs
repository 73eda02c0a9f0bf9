//! Shepard and degree-1 moving-least-squares evaluators for scattered data,
//! used as comparison baselines for the subdivision scheme.
//!
//! Both evaluators use the scattered-data weight convention: the profile on
//! `[0, 1]` is extended by zero, so sites beyond the bandwidth contribute
//! nothing rather than being a domain error. The subdivision engine, whose
//! stencil distances are strictly inside the ball by construction, keeps the
//! strict `[0, 1)` convention instead.

use log::warn;
use thiserror::Error;

use crate::geom::Point2;
use crate::scalar::{as_f64, cst, Scalar};
use crate::weights::WeightFunction;

/// Errors from scattered-data construction and evaluation.
#[derive(Debug, Error)]
pub enum BaselineError {
    /// A value vector does not match the site count.
    #[error("got {values} values for {sites} sites")]
    LengthMismatch { values: usize, sites: usize },
    /// Scattered data needs at least one site.
    #[error("scattered data needs at least one site")]
    Empty,
    /// Two sites coincide, making weights ill-defined.
    #[error("sites {first} and {second} coincide at ({x}, {y})")]
    DuplicateSite {
        first: usize,
        second: usize,
        x: f64,
        y: f64,
    },
    /// A site coordinate or value is not a finite number.
    #[error("site {index} has a non-finite coordinate or value")]
    NonFinite { index: usize },
    /// The evaluation bandwidth must be a positive finite length.
    #[error("bandwidth must be a positive finite number, got {value}")]
    InvalidBandwidth { value: f64 },
    /// No site carries positive weight at the target.
    #[error("no site lies within the bandwidth of ({x}, {y})")]
    EmptyNeighborhood { x: f64, y: f64 },
    /// The weighted sites do not determine a plane.
    #[error("the weighted sites near ({x}, {y}) are collinear; a planar fit is underdetermined")]
    CollinearNeighborhood { x: f64, y: f64 },
}

/// Distinct planar sites with one value per site.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteredData<S> {
    sites: Vec<Point2<S>>,
    values: Vec<S>,
}

impl<S: Scalar> ScatteredData<S> {
    /// Validate and wrap scattered data: equal lengths, finite entries,
    /// pairwise-distinct sites.
    pub fn new(sites: Vec<Point2<S>>, values: Vec<S>) -> Result<Self, BaselineError> {
        if sites.len() != values.len() {
            return Err(BaselineError::LengthMismatch {
                values: values.len(),
                sites: sites.len(),
            });
        }
        if sites.is_empty() {
            return Err(BaselineError::Empty);
        }
        for (i, (s, z)) in sites.iter().zip(&values).enumerate() {
            if !(s.is_finite() && z.is_finite()) {
                return Err(BaselineError::NonFinite { index: i });
            }
        }
        let mut order: Vec<usize> = (0..sites.len()).collect();
        order.sort_by(|&a, &b| {
            let (p, q) = (sites[a], sites[b]);
            p.x.partial_cmp(&q.x)
                .unwrap()
                .then(p.y.partial_cmp(&q.y).unwrap())
        });
        for pair in order.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if sites[a] == sites[b] {
                return Err(BaselineError::DuplicateSite {
                    first: a.min(b),
                    second: a.max(b),
                    x: as_f64(sites[a].x),
                    y: as_f64(sites[a].y),
                });
            }
        }
        Ok(Self { sites, values })
    }

    /// Site positions.
    pub fn sites(&self) -> &[Point2<S>] {
        &self.sites
    }

    /// Data values, parallel to [`sites`](Self::sites).
    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Number of sites.
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    /// Always false: construction rejects empty data.
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

fn check_bandwidth<S: Scalar>(bandwidth: S) -> Result<(), BaselineError> {
    if bandwidth > S::zero() && bandwidth.is_finite() {
        Ok(())
    } else {
        Err(BaselineError::InvalidBandwidth {
            value: as_f64(bandwidth),
        })
    }
}

/// Shepard evaluation: the weighted average of the values whose sites fall
/// within `bandwidth` of `target`.
///
/// The result is a convex combination of the contributing values, so it
/// always lies in their range.
pub fn shepard_eval<S: Scalar>(
    data: &ScatteredData<S>,
    weight: &WeightFunction<S>,
    bandwidth: S,
    target: Point2<S>,
) -> Result<S, BaselineError> {
    check_bandwidth(bandwidth)?;
    let mut num = S::zero();
    let mut den = S::zero();
    for (&s, &z) in data.sites.iter().zip(&data.values) {
        let w = weight.eval_zero_extended(target.dist(s) / bandwidth);
        num += w * z;
        den += w;
    }
    if den > S::zero() {
        Ok(num / den)
    } else {
        Err(BaselineError::EmptyNeighborhood {
            x: as_f64(target.x),
            y: as_f64(target.y),
        })
    }
}

/// Rough condition threshold above which the normal equations are reported
/// as numerically fragile.
const CONDITION_WARN: f64 = 1e12;

/// Degree-1 moving least squares: the value at `target` of the affine
/// function minimizing the weighted squared residuals over the sites within
/// `bandwidth`.
///
/// Identical inputs (sites, weights, evaluation point) make this the same
/// linear problem the subdivision rule solves, so the two agree to rounding.
pub fn mls1_eval<S: Scalar>(
    data: &ScatteredData<S>,
    weight: &WeightFunction<S>,
    bandwidth: S,
    target: Point2<S>,
) -> Result<S, BaselineError> {
    check_bandwidth(bandwidth)?;
    // Basis centered at the target: {1, x - tx, y - ty}. The fitted value at
    // the target is then the first coefficient, and the normal matrix stays
    // well-scaled for targets far from the origin.
    let mut m = [[S::zero(); 3]; 3];
    let mut rhs = [S::zero(); 3];
    let mut contributing = 0usize;
    for (&s, &z) in data.sites.iter().zip(&data.values) {
        let w = weight.eval_zero_extended(target.dist(s) / bandwidth);
        if w <= S::zero() {
            continue;
        }
        contributing += 1;
        let d = s - target;
        let phi = [S::one(), d.x, d.y];
        for (mi, &pi) in m.iter_mut().zip(&phi) {
            for (mij, &pj) in mi.iter_mut().zip(&phi) {
                *mij += w * pi * pj;
            }
        }
        for (ri, &pi) in rhs.iter_mut().zip(&phi) {
            *ri += w * pi * z;
        }
    }
    if contributing == 0 {
        return Err(BaselineError::EmptyNeighborhood {
            x: as_f64(target.x),
            y: as_f64(target.y),
        });
    }
    let coefficients = solve_3x3(m, rhs).ok_or(BaselineError::CollinearNeighborhood {
        x: as_f64(target.x),
        y: as_f64(target.y),
    })?;
    Ok(coefficients[0])
}

/// Solve a symmetric positive semi-definite 3×3 system by Gaussian
/// elimination with partial pivoting. Returns `None` when a pivot falls to
/// rounding level, i.e. the matrix is numerically singular.
fn solve_3x3<S: Scalar>(m: [[S; 3]; 3], rhs: [S; 3]) -> Option<[S; 3]> {
    let mut a = [[S::zero(); 4]; 3];
    let mut scale = S::zero();
    for (row, (mr, &r)) in a.iter_mut().zip(m.iter().zip(&rhs)) {
        row[..3].copy_from_slice(mr);
        row[3] = r;
        for &e in mr {
            scale = scale.max(e.abs());
        }
    }
    let tolerance = scale * cst::<S>(1e-14);
    let mut pivot_min = S::infinity();
    let mut pivot_max = S::zero();
    for k in 0..3 {
        let lead = (k..3)
            .max_by(|&i, &j| a[i][k].abs().partial_cmp(&a[j][k].abs()).unwrap())
            .unwrap();
        a.swap(k, lead);
        let pivot = a[k][k];
        if pivot.abs() <= tolerance {
            return None;
        }
        pivot_min = pivot_min.min(pivot.abs());
        pivot_max = pivot_max.max(pivot.abs());
        let pivot_row = a[k];
        for row in a.iter_mut().skip(k + 1) {
            let factor = row[k] / pivot;
            for (entry, &upper) in row.iter_mut().zip(pivot_row.iter()).skip(k) {
                *entry -= factor * upper;
            }
        }
    }
    if as_f64(pivot_max / pivot_min) > CONDITION_WARN {
        warn!(
            "moving-least-squares normal equations are ill-conditioned (pivot ratio {:.2e})",
            as_f64(pivot_max / pivot_min)
        );
    }
    let mut x = [S::zero(); 3];
    for k in (0..3).rev() {
        let mut acc = a[k][3];
        for j in k + 1..3 {
            acc -= a[k][j] * x[j];
        }
        x[k] = acc / a[k][k];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wls::Scheme;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn p(x: f64, y: f64) -> Point2<f64> {
        Point2::new(x, y)
    }

    #[test]
    fn construction_validates_shape_and_distinctness() {
        assert!(matches!(
            ScatteredData::new(vec![p(0.0, 0.0)], vec![1.0, 2.0]),
            Err(BaselineError::LengthMismatch { values: 2, sites: 1 })
        ));
        assert!(matches!(
            ScatteredData::<f64>::new(vec![], vec![]),
            Err(BaselineError::Empty)
        ));
        assert!(matches!(
            ScatteredData::new(vec![p(0.0, 0.0), p(1.0, 1.0), p(0.0, 0.0)], vec![1.0, 2.0, 3.0]),
            Err(BaselineError::DuplicateSite {
                first: 0,
                second: 2,
                ..
            })
        ));
        assert!(matches!(
            ScatteredData::new(vec![p(0.0, f64::NAN)], vec![1.0]),
            Err(BaselineError::NonFinite { index: 0 })
        ));
        let ok = ScatteredData::new(vec![p(0.0, 0.0), p(1.0, 0.0)], vec![1.0, 2.0]).unwrap();
        assert_eq!(ok.len(), 2);
    }

    #[test]
    fn shepard_interpolates_trivial_configurations() {
        let single = ScatteredData::new(vec![p(2.0, -1.0)], vec![5.5]).unwrap();
        let w = WeightFunction::Hat;
        let v = shepard_eval(&single, &w, 1.0, p(2.0, -1.0)).unwrap();
        assert_eq!(v, 5.5);

        let constant =
            ScatteredData::new(vec![p(0.0, 0.0), p(0.3, 0.1), p(-0.2, 0.4)], vec![3.0; 3])
                .unwrap();
        let v = shepard_eval(&constant, &w, 2.0, p(0.05, 0.05)).unwrap();
        assert!((v - 3.0).abs() <= 1e-15);

        let pair = ScatteredData::new(vec![p(-1.0, 0.0), p(1.0, 0.0)], vec![0.0, 1.0]).unwrap();
        let v = shepard_eval(&pair, &w, 3.0, p(0.0, 0.0)).unwrap();
        assert!((v - 0.5).abs() <= 1e-15);
    }

    #[test]
    fn shepard_stays_in_the_contributing_range_and_detects_empty_neighborhoods() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let sites: Vec<Point2<f64>> = (0..40)
            .map(|_| p(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let values: Vec<f64> = (0..40).map(|_| rng.random_range(-5.0..5.0)).collect();
        let data = ScatteredData::new(sites.clone(), values.clone()).unwrap();
        let w = WeightFunction::Gaussian;
        for _ in 0..50 {
            let target = p(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let v = shepard_eval(&data, &w, 0.8, target).unwrap();
            let contributing: Vec<f64> = sites
                .iter()
                .zip(&values)
                .filter(|(s, _)| target.dist(**s) <= 0.8)
                .map(|(_, &z)| z)
                .collect();
            let lo = contributing.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = contributing.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12, "{v} outside [{lo}, {hi}]");
        }
        assert!(matches!(
            shepard_eval(&data, &w, 0.1, p(50.0, 50.0)),
            Err(BaselineError::EmptyNeighborhood { .. })
        ));
        assert!(matches!(
            shepard_eval(&data, &w, -1.0, p(0.0, 0.0)),
            Err(BaselineError::InvalidBandwidth { value }) if value == -1.0
        ));
    }

    #[test]
    fn mls_reproduces_affine_data_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let f = |v: Point2<f64>| 2.0 + 3.0 * v.x - 5.0 * v.y;
        let sites: Vec<Point2<f64>> = (0..30)
            .map(|_| p(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        let values: Vec<f64> = sites.iter().map(|&s| f(s)).collect();
        let data = ScatteredData::new(sites, values).unwrap();
        for w in [WeightFunction::Constant, WeightFunction::Hat] {
            for _ in 0..20 {
                let target = p(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
                let v = mls1_eval(&data, &w, 1.5, target).unwrap();
                assert!((v - f(target)).abs() <= 1e-10, "{v} vs {}", f(target));
            }
        }
    }

    #[test]
    fn mls_rejects_underdetermined_neighborhoods() {
        let w = WeightFunction::Hat;
        let collinear = ScatteredData::new(
            vec![p(-1.0, 0.0), p(0.0, 0.0), p(1.0, 0.0), p(2.0, 0.0)],
            vec![1.0, 2.0, 3.0, 4.0],
        )
        .unwrap();
        assert!(matches!(
            mls1_eval(&collinear, &w, 5.0, p(0.5, 0.0)),
            Err(BaselineError::CollinearNeighborhood { .. })
        ));

        let pair = ScatteredData::new(vec![p(0.0, 0.0), p(1.0, 1.0)], vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            mls1_eval(&pair, &w, 5.0, p(0.5, 0.5)),
            Err(BaselineError::CollinearNeighborhood { .. })
        ));

        assert!(matches!(
            mls1_eval(&pair, &w, 0.1, p(10.0, 10.0)),
            Err(BaselineError::EmptyNeighborhood { .. })
        ));
    }

    #[test]
    fn mls_matches_the_subdivision_rule_on_a_shared_stencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let center = p(0.25, -0.4);
        let radius = 1.1;
        let sites: Vec<Point2<f64>> = (0..9)
            .map(|_| {
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let dist = rng.random_range(0.1..0.95) * radius;
                p(center.x + dist * angle.cos(), center.y + dist * angle.sin())
            })
            .collect();
        let values: Vec<f64> = (0..9).map(|_| rng.random_range(-2.0..2.0)).collect();

        let weight = WeightFunction::Hat;
        let scheme = Scheme::new(weight.clone());
        let mut ball = scheme.ball_from_points(center, radius, &sites).unwrap();
        scheme.compute_coefficients(&mut ball).unwrap();
        let alpha = &ball.coefficients.as_ref().unwrap().alpha;
        let rule_value: f64 = ball
            .members
            .iter()
            .zip(alpha)
            .map(|(&i, &a)| a * values[i])
            .sum();

        let data = ScatteredData::new(sites, values).unwrap();
        let mls_value = mls1_eval(&data, &weight, radius, center).unwrap();
        assert!(
            (rule_value - mls_value).abs() <= 1e-9 * rule_value.abs().max(1.0),
            "rule {rule_value} vs mls {mls_value}"
        );
    }
}
