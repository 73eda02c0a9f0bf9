//! Shared test utilities: an independent dense solver for the stencil
//! coefficients and generators for random stencil configurations.
//!
//! The dense solver shares no code with the engine: it assembles the 3×3
//! normal equations explicitly and inverts them by cofactor expansion, so
//! agreement between the two routes checks the engine's specialized paths
//! (centroid shortcut, staged elimination) against textbook algebra.

// Compiled once per integration-test target; each target uses a different
// subset of these helpers.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lball_subdiv::{Point2d, WeightFunction};

/// Coefficients of the weighted affine fit through (`sites`, any values)
/// evaluated at `center`: value = Σ coefficient\[i\]·z\[i\].
///
/// Builds `A = Σ wᵢ bᵢ bᵢᵀ` with basis `bᵢ = (1, xᵢ−cx, yᵢ−cy)`, inverts
/// `A` through the adjugate, and reads the evaluation functional off the
/// first row: `coefficientᵢ = wᵢ·(A⁻¹ e₁)ᵀ bᵢ`. Returns `None` when the
/// normal matrix is numerically singular.
pub fn dense_rule_coefficients(
    center: Point2d,
    sites: &[Point2d],
    weights: &[f64],
) -> Option<Vec<f64>> {
    assert_eq!(sites.len(), weights.len());
    let basis = |p: &Point2d| [1.0, p.x - center.x, p.y - center.y];

    let mut a = [[0.0f64; 3]; 3];
    for (site, &w) in sites.iter().zip(weights) {
        let b = basis(site);
        for r in 0..3 {
            for c in 0..3 {
                a[r][c] += w * b[r] * b[c];
            }
        }
    }

    let minor = |r0: usize, r1: usize, c0: usize, c1: usize| -> f64 {
        a[r0][c0] * a[r1][c1] - a[r0][c1] * a[r1][c0]
    };
    let det = a[0][0] * minor(1, 2, 1, 2) - a[0][1] * minor(1, 2, 0, 2)
        + a[0][2] * minor(1, 2, 0, 1);

    // Scale-aware singularity floor: dimensionally det ~ (Σw)·(Σw d²)².
    let scale: f64 = {
        let total: f64 = weights.iter().sum();
        let spread: f64 = sites
            .iter()
            .zip(weights)
            .map(|(s, &w)| w * center.dist(*s).powi(2))
            .sum();
        (total * spread * spread).max(f64::MIN_POSITIVE)
    };
    if det.abs() < 1e-12 * scale {
        return None;
    }

    // First column of the adjugate = cofactors C₀ⱼ, giving row 0 of A⁻¹.
    let inv_row = [
        minor(1, 2, 1, 2) / det,
        -minor(1, 2, 0, 2) / det,
        minor(1, 2, 0, 1) / det,
    ];

    Some(
        sites
            .iter()
            .zip(weights)
            .map(|(site, &w)| {
                let b = basis(site);
                w * (inv_row[0] * b[0] + inv_row[1] * b[1] + inv_row[2] * b[2])
            })
            .collect(),
    )
}

/// A randomly placed stencil: ball center, radius, and member sites kept
/// strictly inside the ball so membership is unambiguous.
pub struct RandomStencil {
    pub center: Point2d,
    pub radius: f64,
    pub sites: Vec<Point2d>,
}

/// Draw a stencil of `size` points uniform in the ball (capped at 98% of
/// the radius), rejecting the rare near-degenerate configurations that no
/// affine fit can resolve.
pub fn random_stencil(rng: &mut ChaCha8Rng, size: usize) -> RandomStencil {
    loop {
        let center = Point2d::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let radius = rng.random_range(0.5..2.0);
        let sites: Vec<Point2d> = (0..size)
            .map(|_| {
                let r = 0.98 * radius * rng.random_range(0.0f64..1.0).sqrt();
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                Point2d::new(center.x + r * angle.cos(), center.y + r * angle.sin())
            })
            .collect();
        let weights = vec![1.0; sites.len()];
        if dense_rule_coefficients(center, &sites, &weights).is_some() {
            return RandomStencil {
                center,
                radius,
                sites,
            };
        }
    }
}

/// The three closed-form weight profiles, cycled by test index.
pub fn cycling_weight(index: usize) -> WeightFunction<f64> {
    match index % 3 {
        0 => WeightFunction::Constant,
        1 => WeightFunction::Hat,
        _ => WeightFunction::Gaussian,
    }
}

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
