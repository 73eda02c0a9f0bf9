//! The subdivision engine: ball stencils, weighted least squares rule
//! coefficients, and level-to-level refinement of vertex data.
//!
//! Refining a [`DataLevel`] works vertex by vertex. Every vertex of the
//! midpoint-refined mesh (retained parent vertices and edge midpoints alike)
//! collects the parent samples strictly inside a ball of the level's radius,
//! fits a weighted degree-1 polynomial through them, and takes the fit's
//! value at the ball center as its new sample. Because evaluation of the fit
//! is linear in the samples, each new value is a fixed linear combination
//! `Σ α_i z_i` of parent values; this module computes those coefficients.
//!
//! Two routes produce the α. When the weighted centroid of the stencil
//! coincides with the ball center (uniform grids, symmetric stencils) the
//! fit's value at the center is simply the weighted average, `α_i = w_i/Σw`.
//! In general the coefficients come from per-member determinant sums μ_i
//! ([`compute_mu`]) with `α_i = w_i μ_i / Σ_j w_j μ_j` — the closed form of
//! evaluating the weighted normal equations at the center. Both routes agree
//! wherever the first applies; the engine picks the cheap one when the
//! centroid defect is below tolerance.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::geom::Point2;
use crate::mesh::{DataLevel, MeshError};
use crate::scalar::{as_f64, cst, Scalar};
use crate::weights::{WeightError, WeightFunction};

/// Errors from stencil construction and refinement.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum WlsError {
    /// No parent sample lies strictly inside the ball.
    #[error("empty stencil: no samples within radius {radius}")]
    EmptyStencil { radius: f64 },
    /// The stencil holds samples but no complete face of the parent mesh, so
    /// a degree-1 fit is not guaranteed to be well posed. Enlarging the base
    /// radius (e.g. above the mesh diameter) removes the error.
    #[error(
        "stencil lacks a complete face of the parent mesh \
         ({members} member(s) within radius {radius})"
    )]
    NoFaceInStencil { radius: f64, members: usize },
    /// The normalization sum `Σ w_j μ_j` vanishes: the weighted fit is
    /// numerically singular (e.g. near-collinear members).
    #[error(
        "singular weighted fit: |Σ w·μ| = {magnitude:.3e} is at or below \
         the threshold {threshold:.3e}"
    )]
    SingularStencil { magnitude: f64, threshold: f64 },
    /// A per-vertex failure inside a whole-level operation, tagged with the
    /// child vertex it occurred at.
    #[error("rule for child vertex {vertex}: {source}")]
    AtVertex {
        vertex: usize,
        #[source]
        source: Box<WlsError>,
    },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

impl WlsError {
    fn at_vertex(self, vertex: usize) -> Self {
        WlsError::AtVertex {
            vertex,
            source: Box::new(self),
        }
    }
}

/// The stencil of one refined vertex: the parent samples strictly inside the
/// ball around `center`, their weights, and (once computed) the rule
/// coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct StencilBall<S> {
    /// Ball center — the position of the vertex being computed.
    pub center: Point2<S>,
    /// Ball radius at this level.
    pub radius: S,
    /// Indices of the member samples, ascending.
    pub members: Vec<usize>,
    /// Member positions, parallel to `members`.
    pub positions: Vec<Point2<S>>,
    /// Member weights `W(dist/radius)`, parallel to `members`.
    pub weights: Vec<S>,
    /// True if any candidate point (inside or outside) lies within the
    /// relative guard band of the ball boundary, making membership
    /// numerically fragile.
    pub boundary_fringe: bool,
    /// Rule coefficients, filled by [`Scheme::compute_coefficients`].
    pub coefficients: Option<Coefficients<S>>,
}

/// Rule coefficients for one stencil.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients<S> {
    /// Per-member coefficients α, parallel to the stencil members. Always
    /// sums to 1.
    pub alpha: Vec<S>,
    /// Whether the weighted-average shortcut produced the coefficients
    /// (centroid defect below tolerance) instead of the μ route.
    pub shortcut: bool,
    /// `Σ α_i²` — the one-step noise variance amplification of this rule.
    /// Computed as `Σw²/(Σw)²` in the shortcut branch because the two are
    /// algebraically identical there and the weight form is exact for unit
    /// weights.
    pub variance_factor: S,
}

/// Per-member determinant sums μ of a stencil (see [`compute_mu`]).
#[derive(Clone, Debug, PartialEq)]
pub struct MuVector<S> {
    pub values: Vec<S>,
}

/// A subdivision scheme: the weight function plus the numerical tolerances
/// of the engine. Tolerances are relative to the level's ball radius, so the
/// scheme behaves identically under uniform rescaling of the geometry.
#[derive(Clone, Debug)]
pub struct Scheme<S> {
    pub weight: WeightFunction<S>,
    /// Relative half-width of the ball-boundary guard band; candidates with
    /// `|dist − radius| ≤ boundary_guard·radius` flag the stencil as fringe.
    pub boundary_guard: S,
    /// Relative tolerance on the weighted centroid defect below which the
    /// weighted-average shortcut applies:
    /// `‖Σ w_i (v_i − v̂)‖ ≤ centroid_tol · Σw · radius`.
    pub centroid_tol: S,
    /// Relative threshold on the normalization sum; the fit is declared
    /// singular when `|Σ w μ| ≤ singular_tol · radius⁴` (μ scales like the
    /// fourth power of length, so the threshold must too).
    pub singular_tol: S,
}

impl<S: Scalar> Scheme<S> {
    pub fn new(weight: WeightFunction<S>) -> Self {
        Self {
            weight,
            boundary_guard: cst(1e-9),
            centroid_tol: cst(1e-12),
            singular_tol: cst(1e-14),
        }
    }

    /// Build the stencil of one new vertex from a parent level: members are
    /// exactly the parent vertices with `‖v_j − v̂‖ < radius` (strict), and
    /// the stencil must contain at least one complete parent face.
    ///
    /// This is the one-shot entry point; whole-level refinement amortizes
    /// the spatial index across vertices but applies the identical
    /// membership predicate.
    pub fn build_ball(
        &self,
        parent: &DataLevel<S>,
        new_vertex: Point2<S>,
    ) -> Result<StencilBall<S>, WlsError> {
        let frame = LevelFrame::new(self, parent);
        frame.ball(new_vertex)
    }

    /// Build a stencil from an explicit point list instead of a mesh: the
    /// members are the points strictly inside the ball. No face-containment
    /// check is possible (there is no mesh), so the caller vouches that the
    /// selection is rich enough for a degree-1 fit.
    pub fn ball_from_points(
        &self,
        center: Point2<S>,
        radius: S,
        points: &[Point2<S>],
    ) -> Result<StencilBall<S>, WlsError> {
        let mut ball = collect_members(
            center,
            radius,
            self.boundary_guard,
            points.iter().enumerate().map(|(i, &p)| (i, p)),
        );
        if ball.members.is_empty() {
            return Err(WlsError::EmptyStencil {
                radius: as_f64(radius),
            });
        }
        self.fill_weights(&mut ball)?;
        Ok(ball)
    }

    fn fill_weights(&self, ball: &mut StencilBall<S>) -> Result<(), WlsError> {
        ball.weights.clear();
        ball.weights.reserve(ball.positions.len());
        for p in &ball.positions {
            let t = p.dist(ball.center) / ball.radius;
            ball.weights.push(self.weight.eval_unit(t)?);
        }
        Ok(())
    }

    /// Fill `ball.coefficients`, choosing the weighted-average shortcut when
    /// the weighted centroid coincides with the center (within tolerance)
    /// and the μ route otherwise.
    pub fn compute_coefficients(&self, ball: &mut StencilBall<S>) -> Result<(), WlsError> {
        if ball.members.is_empty() {
            return Err(WlsError::EmptyStencil {
                radius: as_f64(ball.radius),
            });
        }
        let mut sum_w = S::zero();
        let mut sum_w_sq = S::zero();
        let mut centroid_defect = Point2::zero();
        for (&w, &p) in ball.weights.iter().zip(&ball.positions) {
            sum_w += w;
            sum_w_sq += w * w;
            centroid_defect = centroid_defect + (p - ball.center) * w;
        }
        let tolerance = self.centroid_tol * sum_w * ball.radius;
        let coefficients = if centroid_defect.norm() <= tolerance {
            Coefficients {
                alpha: ball.weights.iter().map(|&w| w / sum_w).collect(),
                shortcut: true,
                variance_factor: sum_w_sq / (sum_w * sum_w),
            }
        } else {
            self.coefficients_via_mu(ball)?
        };
        ball.coefficients = Some(coefficients);
        Ok(())
    }

    /// The general coefficient route, always using the μ determinant sums.
    /// Exposed separately so the two branches can be compared where both
    /// apply; [`compute_coefficients`](Self::compute_coefficients) is the
    /// branch-selecting entry point.
    pub fn coefficients_via_mu(&self, ball: &StencilBall<S>) -> Result<Coefficients<S>, WlsError> {
        let mu = compute_mu(ball);
        let mut denom = S::zero();
        for (&w, &m) in ball.weights.iter().zip(&mu.values) {
            denom += w * m;
        }
        let r_sq = ball.radius * ball.radius;
        let threshold = self.singular_tol * r_sq * r_sq;
        if denom.abs() <= threshold {
            return Err(WlsError::SingularStencil {
                magnitude: as_f64(denom.abs()),
                threshold: as_f64(threshold),
            });
        }
        let alpha: Vec<S> = ball
            .weights
            .iter()
            .zip(&mu.values)
            .map(|(&w, &m)| w * m / denom)
            .collect();
        let variance_factor = alpha.iter().map(|&a| a * a).fold(S::zero(), |s, a| s + a);
        Ok(Coefficients {
            alpha,
            shortcut: false,
            variance_factor,
        })
    }

    /// One refinement step: midpoint-refine the mesh, then compute every
    /// child value from its ball stencil over the parent samples. Errors are
    /// tagged with the child vertex they occurred at.
    pub fn refine_step(&self, parent: &DataLevel<S>) -> Result<DataLevel<S>, WlsError> {
        let (child_tri, _) = parent.tri.midpoint_refine();
        let operator = self.refinement_operator(parent, child_tri.vertices())?;
        let values = operator.apply(&parent.values);
        Ok(DataLevel {
            tri: child_tri,
            values,
            level: parent.level + 1,
            base_l: parent.base_l,
        })
    }

    /// Repeated [`refine_step`](Self::refine_step).
    pub fn subdivide(
        &self,
        initial: &DataLevel<S>,
        iterations: u32,
    ) -> Result<DataLevel<S>, WlsError> {
        let mut current = initial.clone();
        for _ in 0..iterations {
            current = self.refine_step(&current)?;
        }
        Ok(current)
    }

    /// Like [`subdivide`](Self::subdivide) but keeping every level,
    /// starting with the initial one (`iterations + 1` entries).
    pub fn subdivide_with_trace(
        &self,
        initial: &DataLevel<S>,
        iterations: u32,
    ) -> Result<Vec<DataLevel<S>>, WlsError> {
        let mut levels = Vec::with_capacity(iterations as usize + 1);
        levels.push(initial.clone());
        for _ in 0..iterations {
            let next = self.refine_step(levels.last().expect("nonempty"))?;
            levels.push(next);
        }
        Ok(levels)
    }

    /// Build the linear operator taking parent samples to the values at
    /// `targets` (one row per target point). The operator is independent of
    /// the sample values, so it can be built once and applied to many value
    /// vectors — e.g. across Monte Carlo noise trials.
    ///
    /// Emits a single log warning when stencils have candidates inside the
    /// boundary guard band.
    pub fn refinement_operator(
        &self,
        parent: &DataLevel<S>,
        targets: &[Point2<S>],
    ) -> Result<RefinementOperator<S>, WlsError> {
        let frame = LevelFrame::new(self, parent);
        let rows: Vec<Result<Row<S>, WlsError>> = targets
            .par_iter()
            .map(|&p| {
                let mut ball = frame.ball(p)?;
                self.compute_coefficients(&mut ball)?;
                let coeff = ball.coefficients.expect("just computed");
                Ok(Row {
                    members: ball.members,
                    alpha: coeff.alpha,
                    shortcut: coeff.shortcut,
                    variance_factor: coeff.variance_factor,
                    fringe: ball.boundary_fringe,
                })
            })
            .collect();

        let mut operator = RefinementOperator::with_capacity(parent.values.len(), targets.len());
        let mut fringe_rows = 0usize;
        for (vertex, row) in rows.into_iter().enumerate() {
            let row = row.map_err(|e| e.at_vertex(vertex))?;
            fringe_rows += row.fringe as usize;
            operator.push_row(row);
        }
        if fringe_rows > 0 {
            log::warn!(
                "{fringe_rows} of {} stencils have samples within {:e} (relative) of the \
                 ball boundary; membership there is numerically fragile",
                targets.len(),
                as_f64(self.boundary_guard),
            );
        }
        Ok(operator)
    }
}

/// The per-member determinant sums of the weighted degree-1 fit:
///
/// `μ_i = Σ_{j1<j2} w_{j1} w_{j2} · det(v̂, v_{j1}, v_{j2}) · det(v_i, v_{j1}, v_{j2})`
///
/// where `det(a,b,c)` is the unit-row 3×3 determinant (twice the signed
/// triangle area). Evaluating the fit at the center gives `α_i ∝ w_i μ_i`.
///
/// The sums are computed in center-relative coordinates, where they collapse
/// to a quadratic scalar `A` and a linear form `G`:
/// `μ_i = A + (d_i × G)` with `d_i = v_i − v̂`. This keeps the pair loop
/// O(n²) for the whole vector rather than per entry, and makes translation
/// invariance exact by construction.
pub fn compute_mu<S: Scalar>(ball: &StencilBall<S>) -> MuVector<S> {
    let d: Vec<Point2<S>> = ball.positions.iter().map(|&p| p - ball.center).collect();
    let mut a = S::zero();
    let mut g = Point2::zero();
    for j1 in 0..d.len() {
        for j2 in j1 + 1..d.len() {
            let ww = ball.weights[j1] * ball.weights[j2];
            let c12 = d[j1].cross(d[j2]);
            a += ww * c12 * c12;
            g = g + (d[j1] - d[j2]) * (ww * c12);
        }
    }
    MuVector {
        values: d.iter().map(|&di| a + di.cross(g)).collect(),
    }
}

struct Row<S> {
    members: Vec<usize>,
    alpha: Vec<S>,
    shortcut: bool,
    variance_factor: S,
    fringe: bool,
}

/// Sparse row-compressed refinement operator: row ℓ holds the stencil
/// members and coefficients of child vertex ℓ over the parent samples.
#[derive(Clone, Debug, PartialEq)]
pub struct RefinementOperator<S> {
    parent_count: usize,
    offsets: Vec<usize>,
    members: Vec<usize>,
    alpha: Vec<S>,
    shortcut: Vec<bool>,
    variance_factor: Vec<S>,
    fringe: Vec<bool>,
}

impl<S: Scalar> RefinementOperator<S> {
    fn with_capacity(parent_count: usize, rows: usize) -> Self {
        let mut offsets = Vec::with_capacity(rows + 1);
        offsets.push(0);
        Self {
            parent_count,
            offsets,
            members: Vec::new(),
            alpha: Vec::new(),
            shortcut: Vec::with_capacity(rows),
            variance_factor: Vec::with_capacity(rows),
            fringe: Vec::with_capacity(rows),
        }
    }

    fn push_row(&mut self, row: Row<S>) {
        self.members.extend_from_slice(&row.members);
        self.alpha.extend_from_slice(&row.alpha);
        self.offsets.push(self.members.len());
        self.shortcut.push(row.shortcut);
        self.variance_factor.push(row.variance_factor);
        self.fringe.push(row.fringe);
    }

    pub fn child_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn parent_count(&self) -> usize {
        self.parent_count
    }

    /// Stencil members and coefficients of one row.
    pub fn row(&self, child: usize) -> (&[usize], &[S]) {
        let span = self.offsets[child]..self.offsets[child + 1];
        (&self.members[span.clone()], &self.alpha[span])
    }

    /// `Σ α²` of one row — the one-step noise variance amplification at
    /// that child vertex.
    pub fn row_variance_factor(&self, child: usize) -> S {
        self.variance_factor[child]
    }

    pub fn row_shortcut(&self, child: usize) -> bool {
        self.shortcut[child]
    }

    pub fn row_fringe(&self, child: usize) -> bool {
        self.fringe[child]
    }

    /// Number of rows whose coefficients contain at least one negative
    /// entry.
    pub fn rows_with_negative_coefficients(&self) -> usize {
        (0..self.child_count())
            .filter(|&r| self.row(r).1.iter().any(|&a| a < S::zero()))
            .count()
    }

    /// Apply the operator to a parent value vector. Row dot products run in
    /// parallel but each one is evaluated sequentially, so the result is
    /// bitwise deterministic regardless of thread count.
    pub fn apply(&self, parent_values: &[S]) -> Vec<S> {
        assert_eq!(
            parent_values.len(),
            self.parent_count,
            "value vector length must match the operator's parent count"
        );
        (0..self.child_count())
            .into_par_iter()
            .map(|child| {
                let (members, alpha) = self.row(child);
                let mut acc = S::zero();
                for (&m, &a) in members.iter().zip(alpha) {
                    acc += a * parent_values[m];
                }
                acc
            })
            .collect()
    }
}

/// Shared per-level context: the parent points, a uniform spatial hash over
/// them, and the vertex→face adjacency for the face-containment check.
struct LevelFrame<'a, S: Scalar> {
    scheme: &'a Scheme<S>,
    points: &'a [Point2<S>],
    faces: &'a [[usize; 3]],
    adjacency: Vec<Vec<usize>>,
    radius: S,
    grid: Grid2,
}

impl<'a, S: Scalar> LevelFrame<'a, S> {
    fn new(scheme: &'a Scheme<S>, parent: &'a DataLevel<S>) -> Self {
        let radius = parent.ball_radius();
        let points = parent.tri.vertices();
        // Slightly larger cells than the radius so the 3×3 neighborhood
        // provably covers the guard band around the ball boundary too.
        let cell = as_f64(radius) * (1.0 + 1e-6);
        Self {
            scheme,
            points,
            faces: parent.tri.faces(),
            adjacency: parent.tri.vertex_face_adjacency(),
            radius,
            grid: Grid2::build(points, cell),
        }
    }

    fn ball(&self, center: Point2<S>) -> Result<StencilBall<S>, WlsError> {
        let mut ball = collect_members(
            center,
            self.radius,
            self.scheme.boundary_guard,
            self.grid
                .candidates(center)
                .map(|i| (i, self.points[i])),
        );
        if ball.members.is_empty() {
            return Err(WlsError::EmptyStencil {
                radius: as_f64(self.radius),
            });
        }
        if !crate::mesh::stencil_contains_face(&ball.members, self.faces, &self.adjacency) {
            return Err(WlsError::NoFaceInStencil {
                radius: as_f64(self.radius),
                members: ball.members.len(),
            });
        }
        self.scheme.fill_weights(&mut ball)?;
        Ok(ball)
    }
}

/// Apply the membership predicate to candidate `(index, position)` pairs:
/// strictly inside the ball joins the stencil; anything within the relative
/// guard band of the boundary (inside or out) flags the stencil as fringe.
/// Members are sorted ascending by index.
fn collect_members<S: Scalar>(
    center: Point2<S>,
    radius: S,
    guard: S,
    candidates: impl Iterator<Item = (usize, Point2<S>)>,
) -> StencilBall<S> {
    let band = guard * radius;
    let mut selected: Vec<(usize, Point2<S>)> = Vec::new();
    let mut fringe = false;
    for (i, p) in candidates {
        let dist = p.dist(center);
        if (dist - radius).abs() <= band {
            fringe = true;
        }
        if dist < radius {
            selected.push((i, p));
        }
    }
    selected.sort_unstable_by_key(|&(i, _)| i);
    let (members, positions) = selected.into_iter().unzip();
    StencilBall {
        center,
        radius,
        members,
        positions,
        weights: Vec::new(),
        boundary_fringe: fringe,
        coefficients: None,
    }
}

/// Uniform spatial hash over points; querying visits the 3×3 cell block
/// around a position, which covers every point within one cell size.
struct Grid2 {
    cell: f64,
    map: HashMap<(i64, i64), Vec<usize>>,
}

impl Grid2 {
    fn build<S: Scalar>(points: &[Point2<S>], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(cell, p)).or_default().push(i);
        }
        Self { cell, map }
    }

    fn key<S: Scalar>(cell: f64, p: &Point2<S>) -> (i64, i64) {
        (
            (as_f64(p.x) / cell).floor() as i64,
            (as_f64(p.y) / cell).floor() as i64,
        )
    }

    fn candidates<S: Scalar>(&self, center: Point2<S>) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy) = Self::key(self.cell, &center);
        (cx - 1..=cx + 1).flat_map(move |x| {
            (cy - 1..=cy + 1).flat_map(move |y| {
                self.map
                    .get(&(x, y))
                    .map(|v| v.iter().copied())
                    .into_iter()
                    .flatten()
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Triangulation2;

    /// Equilateral unit lattice patch: i·(1,0) + j·(1/2, √3/2) for
    /// i, j ∈ −n..=n, with the standard up/down triangulation.
    fn equilateral_patch(n: i64) -> (Triangulation2<f64>, usize) {
        let side = (2 * n + 1) as usize;
        let index = |i: i64, j: i64| ((j + n) as usize) * side + (i + n) as usize;
        let mut vertices = Vec::with_capacity(side * side);
        for j in -n..=n {
            for i in -n..=n {
                vertices.push(Point2::new(
                    i as f64 + j as f64 / 2.0,
                    j as f64 * 3.0f64.sqrt() / 2.0,
                ));
            }
        }
        let mut faces = Vec::new();
        for j in -n..n {
            for i in -n..n {
                faces.push([index(i, j), index(i + 1, j), index(i, j + 1)]);
                faces.push([index(i + 1, j), index(i + 1, j + 1), index(i, j + 1)]);
            }
        }
        let tri = Triangulation2::new(vertices, faces).unwrap();
        (tri, index(0, 0))
    }

    fn constant_scheme() -> Scheme<f64> {
        Scheme::new(WeightFunction::Constant)
    }

    fn level0(tri: Triangulation2<f64>, base_l: f64) -> DataLevel<f64> {
        let n = tri.vertices().len();
        DataLevel::new(tri, vec![0.0; n], 0, base_l).unwrap()
    }

    #[test]
    fn seven_member_replacement_ball() {
        let (tri, center) = equilateral_patch(4);
        let parent = level0(tri, 1.6);
        let scheme = constant_scheme();
        let mut ball = scheme
            .build_ball(&parent, parent.tri.vertices()[center])
            .unwrap();
        assert_eq!(ball.members.len(), 7);
        assert!(ball.members.contains(&center));
        assert!(!ball.boundary_fringe);
        assert!(ball.weights.iter().all(|&w| w == 1.0));

        scheme.compute_coefficients(&mut ball).unwrap();
        let coeff = ball.coefficients.unwrap();
        assert!(coeff.shortcut);
        for &a in &coeff.alpha {
            assert_eq!(a, 1.0 / 7.0);
        }
        assert_eq!(coeff.variance_factor, 1.0 / 7.0);
    }

    #[test]
    fn ten_member_insertion_ball() {
        let (tri, center) = equilateral_patch(4);
        let parent = level0(tri, 1.6);
        let scheme = constant_scheme();
        let midpoint = parent.tri.vertices()[center] + Point2::new(0.5, 0.0);
        let mut ball = scheme.build_ball(&parent, midpoint).unwrap();
        assert_eq!(ball.members.len(), 10);
        scheme.compute_coefficients(&mut ball).unwrap();
        let coeff = ball.coefficients.unwrap();
        assert!(coeff.shortcut);
        for &a in &coeff.alpha {
            assert_eq!(a, 1.0 / 10.0);
        }
    }

    #[test]
    fn twelve_member_diagonal_ball_on_right_triangle_grid() {
        // Unit square lattice split along the diagonal; the ball around a
        // diagonal midpoint with radius 1.7 collects 12 members.
        let n: i64 = 4;
        let side = (2 * n + 1) as usize;
        let index = |i: i64, j: i64| ((j + n) as usize) * side + (i + n) as usize;
        let mut vertices = Vec::new();
        for j in -n..=n {
            for i in -n..=n {
                vertices.push(Point2::new(i as f64, j as f64));
            }
        }
        let mut faces = Vec::new();
        for j in -n..n {
            for i in -n..n {
                faces.push([index(i, j), index(i + 1, j), index(i + 1, j + 1)]);
                faces.push([index(i, j), index(i + 1, j + 1), index(i, j + 1)]);
            }
        }
        let tri = Triangulation2::new(vertices, faces).unwrap();
        let parent = level0(tri, 1.7);
        let scheme = constant_scheme();
        let mut ball = scheme.build_ball(&parent, Point2::new(0.5, 0.5)).unwrap();
        assert_eq!(ball.members.len(), 12);
        scheme.compute_coefficients(&mut ball).unwrap();
        let coeff = ball.coefficients.unwrap();
        assert!(coeff.shortcut);
        for &a in &coeff.alpha {
            assert_eq!(a, 1.0 / 12.0);
        }
        assert_eq!(coeff.variance_factor, 1.0 / 12.0);
    }

    #[test]
    fn missing_face_and_empty_ball_are_rejected() {
        let (tri, center) = equilateral_patch(3);
        let c = tri.vertices()[center];
        let midpoint = c + Point2::new(0.5, 0.0);
        let scheme = constant_scheme();

        // Radius 0.6 around an edge midpoint reaches only the two endpoints.
        let parent = level0(tri.clone(), 0.6);
        match scheme.build_ball(&parent, midpoint) {
            Err(WlsError::NoFaceInStencil { members: 2, .. }) => {}
            other => panic!("expected missing-face error, got {other:?}"),
        }

        let parent = level0(tri, 0.1);
        match scheme.build_ball(&parent, midpoint) {
            Err(WlsError::EmptyStencil { .. }) => {}
            other => panic!("expected empty stencil, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_stencil_reproduces_known_negative_coefficients() {
        // A lopsided six-point configuration whose evaluation functional has
        // an exactly rational solution with one negative entry.
        let points = [
            Point2::new(-4.0, 1.0),
            Point2::new(-3.0, 1.0),
            Point2::new(-2.0, 1.0),
            Point2::new(-1.0, 1.0),
            Point2::new(4.0, 1.0),
            Point2::new(3.0, -1.0),
        ];
        let scheme = constant_scheme();
        let mut ball = scheme
            .ball_from_points(Point2::zero(), 5.0, &points)
            .unwrap();
        scheme.compute_coefficients(&mut ball).unwrap();
        let coeff = ball.coefficients.unwrap();
        assert!(!coeff.shortcut);
        let expected = [
            16.0 / 97.0,
            55.0 / 388.0,
            23.0 / 194.0,
            37.0 / 388.0,
            -2.0 / 97.0,
            1.0 / 2.0,
        ];
        for (a, e) in coeff.alpha.iter().zip(expected) {
            assert!((a - e).abs() <= 5e-14, "alpha {a} vs expected {e}");
        }
        assert!(coeff.alpha.iter().any(|&a| a < 0.0));
        let sum: f64 = coeff.alpha.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn collinear_members_are_singular() {
        let points = [
            Point2::new(-1.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(1.5, 0.0),
        ];
        let scheme = constant_scheme();
        let ball = scheme
            .ball_from_points(Point2::new(0.25, 0.0), 2.0, &points)
            .unwrap();
        // All determinants vanish on collinear members.
        assert!(compute_mu(&ball).values.iter().all(|&m| m == 0.0));
        match scheme.coefficients_via_mu(&ball) {
            Err(WlsError::SingularStencil { .. }) => {}
            other => panic!("expected singular fit, got {other:?}"),
        }
    }

    #[test]
    fn centered_symmetric_ball_gives_constant_mu() {
        let (tri, center) = equilateral_patch(3);
        let parent = level0(tri, 1.6);
        let scheme = constant_scheme();
        let ball = scheme
            .build_ball(&parent, parent.tri.vertices()[center])
            .unwrap();
        let mu = compute_mu(&ball);
        let first = mu.values[0];
        assert!(first > 0.0);
        for &m in &mu.values {
            assert!((m - first).abs() <= 1e-9 * first.abs());
        }
    }

    #[test]
    fn shortcut_and_mu_route_agree_when_both_apply() {
        let (tri, center) = equilateral_patch(4);
        let parent = level0(tri, 1.6);
        // Hat weights make the agreement non-trivial (non-uniform w).
        let scheme = Scheme::new(WeightFunction::Hat);
        let mut ball = scheme
            .build_ball(&parent, parent.tri.vertices()[center])
            .unwrap();
        scheme.compute_coefficients(&mut ball).unwrap();
        let shortcut = ball.coefficients.clone().unwrap();
        assert!(shortcut.shortcut);
        let general = scheme.coefficients_via_mu(&ball).unwrap();
        for (a, b) in shortcut.alpha.iter().zip(&general.alpha) {
            assert!((a - b).abs() <= 1e-10, "branches disagree: {a} vs {b}");
        }
    }

    /// Irregular fan mesh around a slightly off-center hub.
    fn irregular_fan() -> Triangulation2<f64> {
        let mut vertices = vec![Point2::new(0.05, -0.1)];
        let radii = [1.0, 1.3, 0.8, 1.1, 0.9, 1.2];
        for (k, &r) in radii.iter().enumerate() {
            let angle = k as f64 * std::f64::consts::TAU / 6.0 + 0.3;
            vertices.push(Point2::new(r * angle.cos(), r * angle.sin()));
        }
        let faces = (1..=6).map(|i| [0, i, i % 6 + 1]).collect();
        Triangulation2::new(vertices, faces).unwrap()
    }

    #[test]
    fn linear_data_is_reproduced_exactly() {
        let p = |v: Point2<f64>| 2.0 + 3.0 * v.x - 5.0 * v.y;
        let tri = irregular_fan();
        let base_l = 1.6 * tri.diameter().unwrap();
        let values = tri.vertices().iter().map(|&v| p(v)).collect();
        let parent = DataLevel::new(tri, values, 0, base_l).unwrap();
        let scheme = Scheme::new(WeightFunction::Hat);
        let child = scheme.refine_step(&parent).unwrap();
        for (v, z) in child.tri.vertices().iter().zip(&child.values) {
            assert!((z - p(*v)).abs() <= 1e-10, "at {v:?}: {z} vs {}", p(*v));
        }
        assert_eq!(child.level, 1);
        assert_eq!(child.base_l, parent.base_l);
    }

    #[test]
    fn constant_data_is_preserved() {
        let tri = irregular_fan();
        let base_l = 1.6 * tri.diameter().unwrap();
        let n = tri.vertices().len();
        let parent = DataLevel::new(tri, vec![3.25; n], 0, base_l).unwrap();
        let scheme = Scheme::new(WeightFunction::Gaussian);
        let child = scheme.subdivide(&parent, 2).unwrap();
        for &z in &child.values {
            assert!((z - 3.25).abs() <= 1e-12);
        }
    }

    #[test]
    fn delta_data_spreads_with_the_uniform_mask_values() {
        let (tri, center) = equilateral_patch(4);
        let n = tri.vertices().len();
        let mut values = vec![0.0; n];
        values[center] = 1.0;
        let parent = DataLevel::new(tri, values, 0, 1.6).unwrap();
        let child = constant_scheme().refine_step(&parent).unwrap();

        // Retained center vertex: 7-member average.
        assert_eq!(child.values[center], 1.0 / 7.0);
        // Midpoint of an edge incident to the center: 10-member average.
        let map = parent.tri.midpoint_refine().1;
        let neighbor = parent
            .tri
            .edges()
            .iter()
            .position(|&(a, b)| a == center || b == center)
            .unwrap();
        assert_eq!(child.values[map.old_count + neighbor], 1.0 / 10.0);
        // A midpoint far from the center is untouched.
        let far = parent
            .tri
            .edges()
            .iter()
            .position(|&(a, b)| {
                parent.tri.vertices()[a].dist(parent.tri.vertices()[center]) > 3.0
                    && parent.tri.vertices()[b].dist(parent.tri.vertices()[center]) > 3.0
            })
            .unwrap();
        assert_eq!(child.values[map.old_count + far], 0.0);
    }

    #[test]
    fn zero_iterations_is_identity() {
        let tri = irregular_fan();
        let base_l = 1.6 * tri.diameter().unwrap();
        let n = tri.vertices().len();
        let parent = DataLevel::new(tri, (0..n).map(|i| i as f64).collect(), 0, base_l).unwrap();
        let same = constant_scheme().subdivide(&parent, 0).unwrap();
        assert_eq!(same, parent);
    }

    #[test]
    fn operator_apply_matches_refine_step_bitwise() {
        let (tri, _) = equilateral_patch(3);
        let base_l = 1.6;
        let values: Vec<f64> = tri
            .vertices()
            .iter()
            .map(|v| (1.3 * v.x - 0.7 * v.y).sin())
            .collect();
        let parent = DataLevel::new(tri, values, 0, base_l).unwrap();
        let scheme = Scheme::new(WeightFunction::Hat);
        let (child_tri, _) = parent.tri.midpoint_refine();
        let operator = scheme
            .refinement_operator(&parent, child_tri.vertices())
            .unwrap();
        assert_eq!(operator.parent_count(), parent.values.len());
        assert_eq!(operator.child_count(), child_tri.vertices().len());
        let via_operator = operator.apply(&parent.values);
        let via_step = scheme.refine_step(&parent).unwrap();
        assert_eq!(via_operator, via_step.values);
        // Every row is a partition of unity.
        for r in 0..operator.child_count() {
            let (_, alpha) = operator.row(r);
            let sum: f64 = alpha.iter().sum();
            assert!((sum - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn results_are_bitwise_identical_across_thread_counts() {
        let run = || {
            let (tri, _) = equilateral_patch(3);
            let values: Vec<f64> = tri
                .vertices()
                .iter()
                .map(|v| (2.0 * v.x).cos() + 0.5 * v.y)
                .collect();
            let parent = DataLevel::new(tri, values, 0, 1.6).unwrap();
            Scheme::new(WeightFunction::Hat)
                .subdivide(&parent, 2)
                .unwrap()
                .values
        };
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(run);
        let several = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(run);
        assert_eq!(single, several);
    }

    #[test]
    fn grid_candidates_match_brute_force_membership() {
        // The spatial hash must select exactly the points a full scan would.
        let (tri, _) = equilateral_patch(4);
        let parent = level0(tri, 1.6);
        let scheme = constant_scheme();
        let frame = LevelFrame::new(&scheme, &parent);
        for probe in [
            Point2::new(0.0, 0.0),
            Point2::new(0.5, 0.0),
            Point2::new(0.25, 0.43),
            Point2::new(-1.37, 2.02),
            Point2::new(3.9, -3.3),
        ] {
            let brute: Vec<usize> = parent
                .tri
                .vertices()
                .iter()
                .enumerate()
                .filter(|(_, v)| v.dist(probe) < parent.ball_radius())
                .map(|(i, _)| i)
                .collect();
            match frame.ball(probe) {
                Ok(ball) => assert_eq!(ball.members, brute),
                Err(WlsError::EmptyStencil { .. }) => assert!(brute.is_empty()),
                Err(WlsError::NoFaceInStencil { members, .. }) => {
                    assert_eq!(members, brute.len())
                }
                Err(other) => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn fringe_candidates_are_flagged() {
        // Place one point essentially on the ball boundary.
        let points = [
            Point2::new(0.3, 0.2),
            Point2::new(-0.4, 0.1),
            Point2::new(0.1, -0.35),
            Point2::new(1.0 - 1e-12, 0.0),
        ];
        let scheme = constant_scheme();
        let ball = scheme
            .ball_from_points(Point2::zero(), 1.0, &points)
            .unwrap();
        assert!(ball.boundary_fringe);
        let safe = scheme
            .ball_from_points(Point2::zero(), 1.0, &points[..3])
            .unwrap();
        assert!(!safe.boundary_fringe);
    }
}
