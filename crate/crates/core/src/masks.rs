//! Stationary masks on uniform grids, and the basic limit function.
//!
//! On a lattice `{i·e1 + j·e2}` the scheme's rule at a refined vertex depends
//! only on the vertex's parity class — retained vertices `(0,0)` and the
//! three edge-midpoint classes `(1,0)`, `(0,1)`, `(1,1)` — because all balls
//! of one class are translates of each other. The four rules therefore form
//! a stationary mask that can be derived once and reused everywhere, printed
//! in the classical interleaved 7×7 layout, or compared against the
//! hard-coded reference masks for the equilateral and square lattices.
//!
//! Offsets vs mask entries: the rule of parity `p` computes
//! `z'_{2b+p} = Σ_i α_i z_{b+i}`, and the interleaved mask entry at
//! `m = p − 2i` equals `α_i`. One parity class owns exactly the entries `m ≡ p
//! (mod 2)`.

use serde::Serialize;
use thiserror::Error;

use crate::geom::Point2;
use crate::mesh::{DataLevel, Triangulation2};
use crate::scalar::{as_f64, cst, Scalar};
use crate::weights::WeightFunction;
use crate::wls::{Scheme, WlsError};

/// Errors from mask derivation, reference lookup, and limit-function
/// sampling.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum MaskError {
    #[error("lattice basis is singular: e1 and e2 are collinear")]
    InvalidBasis,
    /// A lattice vertex sits within the guard band of the ball boundary, so
    /// the stencil window is not well separated at this radius.
    #[error(
        "ambiguous stencil window: a lattice vertex lies within the boundary \
         guard band at radius {radius}"
    )]
    AmbiguousWindow { radius: f64 },
    #[error("radius {radius} is outside the reference mask's validity window ({lo}, {hi})")]
    RadiusOutsideWindow { radius: f64, lo: f64, hi: f64 },
    #[error("no reference mask for this combination: {detail}")]
    UnsupportedReference { detail: String },
    #[error("mask support does not fit the 7x7 display window (radius {radius})")]
    SupportTooWide { radius: f64 },
    #[error(
        "lattice patch half-width {half_width} is too small: refinement could \
         drag boundary effects into the sampled region (need at least {required})"
    )]
    BoundaryContamination { half_width: i64, required: i64 },
    #[error(transparent)]
    Wls(#[from] WlsError),
}

/// Lattice family tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum GridKind {
    /// Unit triangle lattice: `e1=(1,0)`, `e2=(1/2, √3/2)`.
    Equilateral,
    /// Unit square lattice split into right triangles along cell diagonals.
    Rectangular,
    Custom,
}

/// A planar lattice spanned by two independent basis vectors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniformGrid<S> {
    e1: Point2<S>,
    e2: Point2<S>,
    kind: GridKind,
}

impl<S: Scalar> UniformGrid<S> {
    pub fn equilateral() -> Self {
        Self {
            e1: Point2::new(S::one(), S::zero()),
            e2: Point2::new(cst::<S>(0.5), cst::<S>(3.0).sqrt() / cst(2.0)),
            kind: GridKind::Equilateral,
        }
    }

    pub fn rectangular() -> Self {
        Self {
            e1: Point2::new(S::one(), S::zero()),
            e2: Point2::new(S::zero(), S::one()),
            kind: GridKind::Rectangular,
        }
    }

    pub fn custom(e1: Point2<S>, e2: Point2<S>) -> Result<Self, MaskError> {
        if e1.cross(e2) == S::zero() || !e1.is_finite() || !e2.is_finite() {
            return Err(MaskError::InvalidBasis);
        }
        Ok(Self {
            e1,
            e2,
            kind: GridKind::Custom,
        })
    }

    pub fn e1(&self) -> Point2<S> {
        self.e1
    }

    pub fn e2(&self) -> Point2<S> {
        self.e2
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    /// Lattice point `i·e1 + j·e2`.
    pub fn vertex(&self, i: i64, j: i64) -> Point2<S> {
        self.e1 * cst(i as f64) + self.e2 * cst(j as f64)
    }

    /// Smallest singular value of the basis matrix: the minimum Euclidean
    /// distance advanced per unit lattice step, over all directions.
    pub fn min_singular_value(&self) -> S {
        let a = self.e1.dot(self.e1);
        let b = self.e1.dot(self.e2);
        let c = self.e2.dot(self.e2);
        let half = cst::<S>(0.5);
        let mean = (a + c) * half;
        let disc = ((a - c) * (a - c) + cst::<S>(4.0) * b * b).sqrt() * half;
        (mean - disc).max(S::zero()).sqrt()
    }

    /// Triangulated square patch `{i, j ∈ −half_width..=half_width}`.
    ///
    /// Each lattice cell splits along its shorter diagonal (ties take the
    /// `e1+e2` one), so the equilateral basis yields equilateral triangles
    /// and the square basis the classical right-triangle split.
    pub fn patch(&self, half_width: i64) -> LatticePatch<S> {
        let n = half_width;
        let side = (2 * n + 1) as usize;
        let mut vertices = Vec::with_capacity(side * side);
        let mut coords = Vec::with_capacity(side * side);
        for j in -n..=n {
            for i in -n..=n {
                vertices.push(self.vertex(i, j));
                coords.push((i, j));
            }
        }
        let index = |i: i64, j: i64| ((j + n) as usize) * side + (i + n) as usize;
        let main_diagonal = (self.e1 + self.e2).norm_sq() <= (self.e2 - self.e1).norm_sq();
        let mut faces = Vec::with_capacity((side - 1) * (side - 1) * 2);
        for j in -n..n {
            for i in -n..n {
                if main_diagonal {
                    faces.push([index(i, j), index(i + 1, j), index(i + 1, j + 1)]);
                    faces.push([index(i, j), index(i + 1, j + 1), index(i, j + 1)]);
                } else {
                    faces.push([index(i, j), index(i + 1, j), index(i, j + 1)]);
                    faces.push([index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)]);
                }
            }
        }
        let tri = Triangulation2::new(vertices, faces).expect("lattice patch is valid");
        LatticePatch {
            tri,
            coords,
            half_width,
            side,
        }
    }
}

/// A triangulated lattice patch with its integer coordinates.
#[derive(Clone, Debug)]
pub struct LatticePatch<S> {
    pub tri: Triangulation2<S>,
    /// Lattice coordinates parallel to `tri.vertices()`.
    pub coords: Vec<(i64, i64)>,
    half_width: i64,
    side: usize,
}

impl<S: Scalar> LatticePatch<S> {
    /// Vertex index of lattice point `(i, j)`, if inside the patch.
    pub fn index(&self, i: i64, j: i64) -> Option<usize> {
        let n = self.half_width;
        if i.abs() > n || j.abs() > n {
            return None;
        }
        Some(((j + n) as usize) * self.side + (i + n) as usize)
    }

    pub fn half_width(&self) -> i64 {
        self.half_width
    }
}

/// The four parity classes in canonical order.
pub const PARITIES: [(u8, u8); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// One stationary rule: the stencil offsets `i` and coefficients of parity
/// class `p`, computing `z'_{2b+p} = Σ_i α_i z_{b+i}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MaskRule<S> {
    pub parity: (u8, u8),
    pub offsets: Vec<(i64, i64)>,
    pub coefficients: Vec<S>,
    /// `Σ α²` — one-step noise variance amplification of this rule.
    pub variance_factor: S,
}

/// A stationary mask: one rule per parity class on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Mask<S> {
    pub grid: UniformGrid<S>,
    /// The ball radius the mask was derived at (level-0 scale).
    pub radius: S,
    /// Rules in [`PARITIES`] order.
    pub rules: [MaskRule<S>; 4],
}

impl<S: Scalar> Mask<S> {
    pub fn rule(&self, parity: (u8, u8)) -> &MaskRule<S> {
        let slot = PARITIES
            .iter()
            .position(|&p| p == parity)
            .expect("parity components are 0 or 1");
        &self.rules[slot]
    }

    /// The interleaved 7×7 mask matrix: entry `(row r, column c)` holds the
    /// coefficient at lattice offset `m = (c−3, r−3)` — columns advance the
    /// first lattice coordinate, rows the second. Rule of parity `p` owns
    /// the entries `m ≡ p (mod 2)` via `m = p − 2i`.
    pub fn matrix(&self) -> Result<[[S; 7]; 7], MaskError> {
        let mut out = [[S::zero(); 7]; 7];
        for rule in &self.rules {
            for (&(i1, i2), &a) in rule.offsets.iter().zip(&rule.coefficients) {
                let m1 = rule.parity.0 as i64 - 2 * i1;
                let m2 = rule.parity.1 as i64 - 2 * i2;
                if m1.abs() > 3 || m2.abs() > 3 {
                    return Err(MaskError::SupportTooWide {
                        radius: as_f64(self.radius),
                    });
                }
                out[(m2 + 3) as usize][(m1 + 3) as usize] = a;
            }
        }
        Ok(out)
    }

    /// Largest per-rule `Σ α²`: the worst-case one-step noise variance
    /// amplification anywhere on the lattice.
    pub fn theta(&self) -> S {
        self.rules
            .iter()
            .map(|r| r.variance_factor)
            .fold(S::zero(), |m, v| m.max(v))
    }
}

/// Derive the stationary mask of `scheme` on `grid` at ball radius `radius`
/// by running the engine's coefficient computation on each parity class of
/// the infinite lattice.
///
/// Errors with [`MaskError::AmbiguousWindow`] if any lattice vertex falls
/// inside the boundary guard band — the mask is only well defined for radii
/// strictly between consecutive lattice distances.
pub fn derive_mask<S: Scalar>(
    grid: &UniformGrid<S>,
    scheme: &Scheme<S>,
    radius: S,
) -> Result<Mask<S>, MaskError> {
    let sigma = grid.min_singular_value();
    if !(sigma > S::zero()) {
        return Err(MaskError::InvalidBasis);
    }
    if !(radius > S::zero() && radius.is_finite()) {
        return Err(MaskError::AmbiguousWindow {
            radius: as_f64(radius),
        });
    }
    // A box of lattice steps guaranteed to cover the ball around any parity
    // center: |i·B| ≤ |i|·σ_min is a lower bound on distance, plus one step
    // of slack for the half-step parity offset.
    let reach = as_f64(radius / sigma).ceil() as i64 + 2;
    let mut points = Vec::new();
    let mut coords = Vec::new();
    for j in -reach..=reach {
        for i in -reach..=reach {
            points.push(grid.vertex(i, j));
            coords.push((i, j));
        }
    }

    let rules = PARITIES.map(|parity| -> Result<MaskRule<S>, MaskError> {
        let center =
            (grid.e1 * cst(parity.0 as f64) + grid.e2 * cst(parity.1 as f64)) * cst::<S>(0.5);
        let mut ball = scheme.ball_from_points(center, radius, &points)?;
        if ball.boundary_fringe {
            return Err(MaskError::AmbiguousWindow {
                radius: as_f64(radius),
            });
        }
        scheme.compute_coefficients(&mut ball)?;
        let coeff = ball.coefficients.expect("just computed");
        Ok(MaskRule {
            parity,
            offsets: ball.members.iter().map(|&m| coords[m]).collect(),
            coefficients: coeff.alpha,
            variance_factor: coeff.variance_factor,
        })
    });
    // Propagate the first error, keeping the canonical parity order.
    let mut iter = rules.into_iter();
    let rules = [
        iter.next().unwrap()?,
        iter.next().unwrap()?,
        iter.next().unwrap()?,
        iter.next().unwrap()?,
    ];
    Ok(Mask {
        grid: grid.clone(),
        radius,
        rules,
    })
}

/// The hard-coded masks of the two canonical lattices for the constant and
/// hat weights, transcribed from their closed forms.
///
/// Validity windows (strict): equilateral `(3/2, √3)`; rectangular
/// `(√10/2, √13/2)` — the upper bounds are the next lattice distance seen by
/// a stencil, the lower bounds the distance to the farthest member.
pub fn reference_mask<S: Scalar>(
    kind: GridKind,
    weight: &WeightFunction<S>,
    radius: S,
) -> Result<Mask<S>, MaskError> {
    let l = as_f64(radius);
    let (grid, lo, hi) = match kind {
        GridKind::Equilateral => (UniformGrid::equilateral(), 1.5, 3f64.sqrt()),
        GridKind::Rectangular => (
            UniformGrid::rectangular(),
            10f64.sqrt() / 2.0,
            13f64.sqrt() / 2.0,
        ),
        GridKind::Custom => {
            return Err(MaskError::UnsupportedReference {
                detail: "reference masks exist only for the canonical lattices".into(),
            })
        }
    };
    if !(l > lo && l < hi) {
        return Err(MaskError::RadiusOutsideWindow { radius: l, lo, hi });
    }

    let matrix: [[f64; 7]; 7] = match (kind, weight) {
        (GridKind::Equilateral, WeightFunction::Constant) => {
            // 1/70 · integer matrix; 10/70 on the replacement class, 7/70 on
            // the insertion classes.
            const M: [[i32; 7]; 7] = [
                [0, 0, 0, 7, 7, 7, 7],
                [0, 0, 7, 10, 7, 10, 7],
                [0, 7, 7, 7, 7, 7, 7],
                [7, 10, 7, 10, 7, 10, 7],
                [7, 7, 7, 7, 7, 7, 0],
                [7, 10, 7, 10, 7, 0, 0],
                [7, 7, 7, 7, 0, 0, 0],
            ];
            M.map(|row| row.map(|v| v as f64 / 70.0))
        }
        (GridKind::Rectangular, WeightFunction::Constant) => {
            // 1/72 · integer matrix; 8/72 replacement, 9/72 axis insertions,
            // 6/72 diagonal insertion.
            const M: [[i32; 7]; 7] = [
                [0, 0, 6, 9, 6, 0, 0],
                [0, 8, 9, 8, 9, 8, 0],
                [6, 9, 6, 9, 6, 9, 6],
                [9, 8, 9, 8, 9, 8, 9],
                [6, 9, 6, 9, 6, 9, 6],
                [0, 8, 9, 8, 9, 8, 0],
                [0, 0, 6, 9, 6, 0, 0],
            ];
            M.map(|row| row.map(|v| v as f64 / 72.0))
        }
        (GridKind::Equilateral, WeightFunction::Hat) => {
            // Closed forms in L; each letter is one stencil ring.
            let g = 2.0 * (10.0 * l - 4.0 - 3f64.sqrt() - 2.0 * 7f64.sqrt());
            let a = (2.0 * l - 3.0) / g;
            let b = (2.0 * l - 7f64.sqrt()) / g;
            let c = (l - 1.0) / (7.0 * l - 6.0);
            let d = (2.0 * l - 3f64.sqrt()) / g;
            let e = (2.0 * l - 1.0) / g;
            let f = l / (7.0 * l - 6.0);
            [
                [0.0, 0.0, 0.0, a, b, b, a],
                [0.0, 0.0, b, c, d, c, b],
                [0.0, b, d, e, e, d, b],
                [a, c, e, f, e, c, a],
                [b, d, e, e, d, b, 0.0],
                [b, c, d, c, b, 0.0, 0.0],
                [a, b, b, a, 0.0, 0.0, 0.0],
            ]
        }
        (GridKind::Rectangular, WeightFunction::Hat) => {
            // Closed forms carry a common factor 72 (each rule sums to 72),
            // normalized away on transcription.
            let p = 2f64.sqrt() - 6.0 * l + 2.0 * 10f64.sqrt();
            let q = 5f64.sqrt() - 4.0 * l + 2.0;
            let r = 4.0 * 2f64.sqrt() - 9.0 * l + 4.0;
            let a = -18.0 * (2.0 * l - 10f64.sqrt()) / p / 72.0;
            let b = -18.0 * (2.0 * l - 3.0) / q / 72.0;
            let c = -72.0 * (l - 2f64.sqrt()) / r / 72.0;
            let d = -18.0 * (2.0 * l - 5f64.sqrt()) / q / 72.0;
            let e = -72.0 * (l - 1.0) / r / 72.0;
            let f = -18.0 * (2.0 * l - 2f64.sqrt()) / p / 72.0;
            let g = -18.0 * (2.0 * l - 1.0) / q / 72.0;
            let h = -72.0 * l / r / 72.0;
            [
                [0.0, 0.0, a, b, a, 0.0, 0.0],
                [0.0, c, d, e, d, c, 0.0],
                [a, d, f, g, f, d, a],
                [b, e, g, h, g, e, b],
                [a, d, f, g, f, d, a],
                [0.0, c, d, e, d, c, 0.0],
                [0.0, 0.0, a, b, a, 0.0, 0.0],
            ]
        }
        (_, other) => {
            return Err(MaskError::UnsupportedReference {
                detail: format!("no closed-form mask for the {} weight", other.describe()),
            })
        }
    };
    Ok(mask_from_matrix(grid, radius, matrix))
}

/// Decompose an interleaved 7×7 matrix (entry `(r,c)` ↦ offset
/// `m = (c−3, r−3)`) into the four parity rules.
fn mask_from_matrix<S: Scalar>(
    grid: UniformGrid<S>,
    radius: S,
    matrix: [[f64; 7]; 7],
) -> Mask<S> {
    let rules = PARITIES.map(|parity| {
        let mut offsets = Vec::new();
        let mut coefficients = Vec::new();
        for (r, row) in matrix.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let m1 = c as i64 - 3;
                let m2 = r as i64 - 3;
                if (m1.rem_euclid(2), m2.rem_euclid(2)) != (parity.0 as i64, parity.1 as i64) {
                    continue;
                }
                if v == 0.0 {
                    continue;
                }
                offsets.push(((parity.0 as i64 - m1) / 2, (parity.1 as i64 - m2) / 2));
                coefficients.push(cst::<S>(v));
            }
        }
        let variance_factor = coefficients
            .iter()
            .map(|&a| a * a)
            .fold(S::zero(), |s, v| s + v);
        MaskRule {
            parity,
            offsets,
            coefficients,
            variance_factor,
        }
    });
    Mask {
        grid,
        radius,
        rules,
    }
}

/// A sampled field on a refined lattice patch: the triangulation, the value
/// per vertex, and each vertex's integer lattice coordinate scaled by
/// `2^level` (vertex position = `(u1·e1 + u2·e2) / 2^level`).
#[derive(Clone, Debug)]
pub struct LimitField<S> {
    pub tri: Triangulation2<S>,
    pub values: Vec<S>,
    pub level: u32,
    pub lattice: Vec<(i64, i64)>,
    pub grid: UniformGrid<S>,
}

/// Refine delta data (1 at the lattice origin, 0 elsewhere) `iterations`
/// times on a patch large enough that boundary effects cannot reach the
/// support of the result.
///
/// The support reach after any number of iterations is below `2·radius`
/// (the step-`k` ball has radius `radius·2^−k`, and the reaches form a
/// geometric series), so a patch extending 4 radii from the origin is safely
/// uncontaminated. `half_width` overrides the automatic patch size; it is
/// rejected if smaller than that safety margin.
pub fn basic_limit_function<S: Scalar>(
    grid: &UniformGrid<S>,
    scheme: &Scheme<S>,
    radius: S,
    iterations: u32,
    half_width: Option<i64>,
) -> Result<LimitField<S>, MaskError> {
    let sigma = grid.min_singular_value();
    if !(sigma > S::zero()) {
        return Err(MaskError::InvalidBasis);
    }
    let required = as_f64(cst::<S>(4.0) * radius / sigma).ceil() as i64;
    let hw = half_width.unwrap_or(required + 1);
    if hw < required {
        return Err(MaskError::BoundaryContamination {
            half_width: hw,
            required,
        });
    }

    let patch = grid.patch(hw);
    let origin = patch.index(0, 0).expect("origin is inside the patch");
    let mut values = vec![S::zero(); patch.tri.vertices().len()];
    values[origin] = S::one();
    let mut level = DataLevel::new(patch.tri, values, 0, radius).expect("consistent by construction");
    let mut lattice = patch.coords;

    for _ in 0..iterations {
        let (child_tri, map) = level.tri.midpoint_refine();
        // Integer coordinates double per level; midpoints average exactly.
        let mut child_lattice: Vec<(i64, i64)> =
            lattice.iter().map(|&(u1, u2)| (2 * u1, 2 * u2)).collect();
        child_lattice.extend(
            map.parent_edge
                .iter()
                .map(|&(a, b)| (lattice[a].0 + lattice[b].0, lattice[a].1 + lattice[b].1)),
        );
        let operator = scheme.refinement_operator(&level, child_tri.vertices())?;
        let values = operator.apply(&level.values);
        level = DataLevel {
            tri: child_tri,
            values,
            level: level.level + 1,
            base_l: level.base_l,
        };
        lattice = child_lattice;
    }

    Ok(LimitField {
        tri: level.tri,
        values: level.values,
        level: level.level,
        lattice,
        grid: grid.clone(),
    })
}
