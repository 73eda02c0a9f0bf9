//! Randomized structural properties of the stencil engine: partition of
//! unity, geometric invariances, agreement with an independent dense
//! solver, exact affine evaluation, and consistency between the
//! constant-weight shortcut and the general weighted path.

mod common;

use common::dense_rule_coefficients;
use proptest::prelude::*;

use lball_subdiv::{Point2d, Scheme, StencilBall, WeightFunction, WeightTable};

/// A well-posed random stencil: ball center/radius plus 3–12 sites kept
/// strictly inside, constrained to configurations the dense solver accepts.
#[derive(Clone, Debug)]
struct Stencil {
    center: Point2d,
    radius: f64,
    sites: Vec<Point2d>,
}

fn stencil_strategy() -> impl Strategy<Value = Stencil> {
    (
        -1.0f64..1.0,
        -1.0f64..1.0,
        0.5f64..2.0,
        prop::collection::vec((0.0f64..1.0, 0.0f64..std::f64::consts::TAU), 3..=12),
    )
        .prop_filter_map("degenerate site configuration", |(cx, cy, radius, polar)| {
            let center = Point2d::new(cx, cy);
            let sites: Vec<Point2d> = polar
                .iter()
                .map(|&(u, angle)| {
                    let r = 0.98 * radius * u.sqrt();
                    Point2d::new(center.x + r * angle.cos(), center.y + r * angle.sin())
                })
                .collect();
            let unit = vec![1.0; sites.len()];
            dense_rule_coefficients(center, &sites, &unit).map(|_| Stencil {
                center,
                radius,
                sites,
            })
        })
}

fn weight_strategy() -> impl Strategy<Value = WeightFunction<f64>> {
    prop_oneof![
        Just(WeightFunction::Constant),
        Just(WeightFunction::Hat),
        Just(WeightFunction::Gaussian),
        prop::collection::vec(0.05f64..1.0, 2..6).prop_map(|samples| {
            WeightFunction::Tabulated(WeightTable::new(samples).expect("positive samples"))
        }),
    ]
}

/// Run the engine on a stencil, returning the solved ball.
fn solve(
    weight: &WeightFunction<f64>,
    center: Point2d,
    radius: f64,
    sites: &[Point2d],
) -> StencilBall<f64> {
    let scheme = Scheme::new(weight.clone());
    let mut ball = scheme
        .ball_from_points(center, radius, sites)
        .expect("sites lie strictly inside the ball");
    scheme
        .compute_coefficients(&mut ball)
        .expect("configuration is well conditioned");
    ball
}

fn alpha(ball: &StencilBall<f64>) -> &[f64] {
    &ball.coefficients.as_ref().expect("solved").alpha
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn coefficients_partition_unity(stencil in stencil_strategy(), weight in weight_strategy()) {
        let ball = solve(&weight, stencil.center, stencil.radius, &stencil.sites);
        let sum: f64 = alpha(&ball).iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12, "Σα = {sum}");
    }

    #[test]
    fn coefficients_ignore_translation_and_scale(
        stencil in stencil_strategy(),
        weight in weight_strategy(),
        shift in (-50.0f64..50.0, -50.0f64..50.0),
        scale in 0.1f64..10.0,
    ) {
        let base = solve(&weight, stencil.center, stencil.radius, &stencil.sites);

        let moved_center = Point2d::new(
            scale * (stencil.center.x + shift.0),
            scale * (stencil.center.y + shift.1),
        );
        let moved_sites: Vec<Point2d> = stencil
            .sites
            .iter()
            .map(|s| Point2d::new(scale * (s.x + shift.0), scale * (s.y + shift.1)))
            .collect();
        let moved = solve(&weight, moved_center, scale * stencil.radius, &moved_sites);

        prop_assert_eq!(base.members.len(), moved.members.len());
        for (a, b) in alpha(&base).iter().zip(alpha(&moved)) {
            prop_assert!((a - b).abs() <= 1e-10, "α changed {a} → {b} under a similarity map");
        }
    }

    #[test]
    fn engine_matches_the_dense_solver(
        stencil in stencil_strategy(),
        weight in weight_strategy(),
    ) {
        let ball = solve(&weight, stencil.center, stencil.radius, &stencil.sites);
        let oracle = dense_rule_coefficients(stencil.center, &ball.positions, &ball.weights)
            .expect("solvable by construction");
        for (engine, dense) in alpha(&ball).iter().zip(&oracle) {
            let tolerance = 1e-9 * dense.abs().max(1.0);
            prop_assert!(
                (engine - dense).abs() <= tolerance,
                "engine {engine} vs dense {dense}"
            );
        }
    }

    #[test]
    fn affine_data_is_evaluated_exactly(
        stencil in stencil_strategy(),
        weight in weight_strategy(),
        plane in (-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0),
    ) {
        let (a0, a1, a2) = plane;
        let p = |q: Point2d| a0 + a1 * q.x + a2 * q.y;
        let ball = solve(&weight, stencil.center, stencil.radius, &stencil.sites);
        let fitted: f64 = alpha(&ball)
            .iter()
            .zip(&ball.positions)
            .map(|(a, &site)| a * p(site))
            .sum();
        let expected = p(stencil.center);
        prop_assert!(
            (fitted - expected).abs() <= 1e-10,
            "affine fit drifted: {fitted} vs {expected}"
        );
    }

    #[test]
    fn tabulated_unit_weights_agree_with_the_constant_shortcut(
        stencil in stencil_strategy(),
    ) {
        // A flat weight table evaluates to 1 everywhere, but takes the
        // general weighted path instead of the constant-weight shortcut;
        // the two routes must produce the same rule.
        let shortcut = solve(
            &WeightFunction::Constant,
            stencil.center,
            stencil.radius,
            &stencil.sites,
        );
        let table = WeightFunction::Tabulated(
            WeightTable::new(vec![1.0, 1.0]).expect("valid table"),
        );
        let general = solve(&table, stencil.center, stencil.radius, &stencil.sites);
        for (a, b) in alpha(&shortcut).iter().zip(alpha(&general)) {
            prop_assert!((a - b).abs() <= 1e-10, "branches disagree: {a} vs {b}");
        }
    }
}
