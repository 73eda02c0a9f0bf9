//! Weighted least squares subdivision for noisy data on triangle meshes.
//!
//! Classical interpolatory subdivision reproduces noise along with signal.
//! The schemes in this crate instead fit a plane through every sample that
//! falls inside a shrinking ball around each refined vertex, weighted by
//! distance, and evaluate the fit at the vertex. Averaging over many samples
//! contracts noise variance level by level while still reproducing linear
//! data exactly.
//!
//! The crate is generic over the scalar type (`f32` or `f64`) through the
//! [`scalar::Scalar`] trait; the [`Real`] alias and friends fix the default
//! double-precision types.

// Validation guards are written as `!(x > 0.0)` on purpose: the negation
// rejects NaN along with non-positive values, which `x <= 0.0` would let
// through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod geom;
pub mod geom3d;
pub mod io;
pub mod masks;
pub mod mesh;
pub mod meshgen;
pub mod scalar;
pub mod weights;
pub mod wls;

pub use analysis::{
    check_reproduction, error_metrics, estimate_approximation_order, noise_variance_trial, theta,
    AnalysisError, ErrorMetrics, NoiseReport, RateReport, VarianceRatio,
};
pub use baselines::{mls1_eval, shepard_eval, BaselineError, ScatteredData};
pub use geom::{Point2, Point3, Rect};
pub use geom3d::{
    local_frame, surface_refine_step, surface_subdivide, Geom3dError, LocalFrame, Triangulation3,
};
pub use io::{
    load_mesh2, load_mesh3, load_values, parse_weight_spec, save_limit_field, save_mesh2,
    save_mesh3, save_values, IoError, LevelCount, Provenance,
};
pub use masks::{
    basic_limit_function, derive_mask, reference_mask, GridKind, LatticePatch, LimitField, Mask,
    MaskError, MaskRule, UniformGrid,
};
pub use mesh::{DataLevel, MeshError, MeshViolation, RefinementMap, Triangulation2};
pub use meshgen::{
    add_radial_noise, icosphere, jittered_patch, sample_function_with_noise, scattered_mesh,
    MeshgenError, ScatterConfig,
};
pub use scalar::Scalar;
pub use weights::{WeightError, WeightFunction, WeightTable};
pub use wls::{
    compute_mu, Coefficients, MuVector, RefinementOperator, Scheme, StencilBall, WlsError,
};

/// Default scalar type.
pub type Real = f64;
/// Planar point at default precision.
pub type Point2d = Point2<Real>;
/// Spatial point at default precision.
pub type Point3d = Point3<Real>;
/// Planar triangulation at default precision.
pub type Tri2d = Triangulation2<Real>;
/// Surface triangulation at default precision.
pub type Tri3d = Triangulation3<Real>;
