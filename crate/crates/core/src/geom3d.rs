//! Refinement of noisy geometric data: triangulated surfaces in 3D.
//!
//! The planar engine ([`crate::wls`]) fits values over a known 2D domain. For
//! general surfaces no global parametrization exists, so each new vertex is
//! computed in a local frame instead: collect the mesh vertices inside a 3D
//! ball around the predicted position, estimate a tangent plane from their
//! principal directions, interpret in-plane coordinates as a scattered 2D
//! domain and the height above the plane as the noisy sample, apply the
//! planar rule, and lift the fitted height back along the estimated normal.
//!
//! Unlike the planar pipeline, the ball radius here is an absolute length.
//! [`surface_subdivide`] halves it explicitly on every iteration to mirror
//! the per-level shrinkage of the functional scheme.

use crate::geom::{Point2, Point3};
use crate::mesh::{
    self, derive_edges, refine_topology, MeshError, MeshViolation, RefinementMap,
};
use crate::scalar::{as_f64, cst, Scalar};
use crate::wls::{Scheme, WlsError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Errors from the surface pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Geom3dError {
    /// No mesh vertex lies strictly inside the ball around a new vertex.
    #[error("no surface vertex lies within distance {radius} of the target")]
    EmptyNeighborhood { radius: f64 },
    /// The ball members never cover a full face, so the neighborhood does
    /// not describe a patch of surface.
    #[error(
        "surface stencil holds {members} vertices within radius {radius} \
         but no complete face"
    )]
    NoFaceInStencil { radius: f64, members: usize },
    /// The neighborhood does not span a plane, so no tangent frame exists.
    #[error(
        "degenerate neighborhood of {points} points (rank {rank}): a \
         tangent-plane fit needs at least 3 points spanning rank 2"
    )]
    DegenerateNeighborhood { points: usize, rank: usize },
    /// The ball radius is not a positive finite length.
    #[error("ball radius must be positive and finite, got {value}")]
    InvalidRadius { value: f64 },
    /// A failure at one vertex of a whole-mesh refinement.
    #[error("surface refinement failed at new vertex {vertex}")]
    AtVertex {
        vertex: usize,
        #[source]
        source: Box<Geom3dError>,
    },
    /// A planar-rule failure inside the local frame.
    #[error(transparent)]
    Wls(#[from] WlsError),
    /// An invalid input mesh.
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

impl Geom3dError {
    fn at_vertex(self, vertex: usize) -> Self {
        Geom3dError::AtVertex {
            vertex,
            source: Box::new(self),
        }
    }
}

/// A triangulated surface in 3D: vertices, triangular faces, and the derived
/// undirected edge table (sorted ascending, deduplicated).
///
/// Structural invariants match the planar [`crate::Triangulation2`]: finite
/// vertices, in-range and pairwise-distinct face indices, and no zero-area
/// faces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Triangulation3<S> {
    vertices: Vec<Point3<S>>,
    faces: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
}

impl<S: Scalar> Triangulation3<S> {
    pub fn new(vertices: Vec<Point3<S>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let violations = validate_surface(&vertices, &faces);
        if !violations.is_empty() {
            return Err(MeshError::Invalid { violations });
        }
        Ok(Self::from_parts_unchecked(vertices, faces))
    }

    /// Build without validation; the caller vouches for the invariants.
    pub fn from_parts_unchecked(vertices: Vec<Point3<S>>, faces: Vec<[usize; 3]>) -> Self {
        let edges = derive_edges(&faces);
        Self {
            vertices,
            faces,
            edges,
        }
    }

    pub fn vertices(&self) -> &[Point3<S>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges `(lo, hi)`, sorted ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// All structural violations of this mesh (empty when valid).
    pub fn validate(&self) -> Vec<MeshViolation> {
        validate_surface(&self.vertices, &self.faces)
    }

    /// Length of the longest edge.
    pub fn diameter(&self) -> Result<S, MeshError> {
        self.edges
            .iter()
            .map(|&(a, b)| self.vertices[a].dist(self.vertices[b]))
            .fold(None, |acc: Option<S>, d| {
                Some(acc.map_or(d, |m| if d > m { d } else { m }))
            })
            .ok_or(MeshError::NoEdges)
    }

    /// For each vertex, the indices of its incident faces (ascending).
    pub fn vertex_face_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (f, face) in self.faces.iter().enumerate() {
            for &v in face {
                adj[v].push(f);
            }
        }
        adj
    }

    /// Split every face into four by inserting edge midpoints. Midpoints are
    /// appended after the original vertices in ascending edge order; the
    /// returned map records which edge produced each one.
    pub fn midpoint_refine(&self) -> (Self, RefinementMap) {
        let topo = refine_topology(&self.faces, self.vertices.len(), &self.edges);
        let mut vertices = self.vertices.clone();
        vertices.extend(
            topo.map
                .parent_edge
                .iter()
                .map(|&(a, b)| self.vertices[a].midpoint(self.vertices[b])),
        );
        let refined = Self::from_parts_unchecked(vertices, topo.faces);
        debug_assert!(refined.validate().is_empty());
        (refined, topo.map)
    }
}

fn validate_surface<S: Scalar>(
    vertices: &[Point3<S>],
    faces: &[[usize; 3]],
) -> Vec<MeshViolation> {
    let mut out = Vec::new();
    for (vertex, p) in vertices.iter().enumerate() {
        if !p.is_finite() {
            out.push(MeshViolation::NonFiniteVertex { vertex });
        }
    }
    let n = vertices.len();
    for (face, idx) in faces.iter().enumerate() {
        let mut structural = false;
        for &vertex in idx {
            if vertex >= n {
                out.push(MeshViolation::IndexOutOfRange {
                    face,
                    vertex,
                    vertex_count: n,
                });
                structural = true;
            }
        }
        if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] {
            out.push(MeshViolation::DuplicateIndex { face });
            structural = true;
        }
        if structural {
            continue;
        }
        let [a, b, c] = idx.map(|i| vertices[i]);
        if !(a.is_finite() && b.is_finite() && c.is_finite()) {
            continue; // already reported as non-finite vertices
        }
        if (b - a).cross(c - a).norm_sq() == S::zero() {
            out.push(MeshViolation::DegenerateFace { face });
        }
    }
    out
}

/// An orthonormal local reference system on the surface: `b1`, `b2` span the
/// estimated tangent plane and `b3 = b1 × b2` estimates the normal.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalFrame<S> {
    pub origin: Point3<S>,
    pub b1: Point3<S>,
    pub b2: Point3<S>,
    pub b3: Point3<S>,
}

impl<S: Scalar> LocalFrame<S> {
    /// Coordinates of `p` in this frame: in-plane pair plus height.
    pub fn local_coordinates(&self, p: Point3<S>) -> (Point2<S>, S) {
        let d = p - self.origin;
        (Point2::new(d.dot(self.b1), d.dot(self.b2)), d.dot(self.b3))
    }

    /// The world-space point at `height` above the origin along the normal.
    pub fn lift(&self, height: S) -> Point3<S> {
        self.origin + self.b3.scale(height)
    }
}

/// Estimate a tangent frame at `origin` from the neighborhood `points`.
///
/// `b1` and `b2` are the two dominant principal directions of the offsets
/// `p − origin` (eigenvectors of their scatter matrix, largest eigenvalues
/// first); `b3 = b1 × b2`. Each principal direction is sign-normalized so its
/// largest-magnitude component (lowest index on ties) is positive, which
/// makes the frame a deterministic function of the point set.
///
/// Fails with [`Geom3dError::DegenerateNeighborhood`] when fewer than three
/// points are given or the offsets do not span a plane (second eigenvalue
/// at or below `1e-12` times the first).
pub fn local_frame<S: Scalar>(
    origin: Point3<S>,
    points: &[Point3<S>],
) -> Result<LocalFrame<S>, Geom3dError> {
    if points.len() < 3 {
        return Err(Geom3dError::DegenerateNeighborhood {
            points: points.len(),
            rank: points.len().min(2),
        });
    }
    // Scatter matrix of the offsets. The origin is the position estimate,
    // not the centroid, so no mean subtraction takes place.
    let mut c = [[S::zero(); 3]; 3];
    for &p in points {
        let d = p - origin;
        let v = [d.x, d.y, d.z];
        for (i, &vi) in v.iter().enumerate() {
            for (j, &vj) in v.iter().enumerate() {
                c[i][j] += vi * vj;
            }
        }
    }
    let (eigenvalues, eigenvectors) = jacobi_eigen(c);
    // Indices ordered by descending eigenvalue, original order on ties.
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        eigenvalues[b]
            .partial_cmp(&eigenvalues[a])
            .expect("scatter eigenvalues are finite")
            .then(a.cmp(&b))
    });
    let lambda1 = eigenvalues[order[0]];
    let lambda2 = eigenvalues[order[1]];
    let rank_tol = cst::<S>(1e-12) * lambda1;
    if !(lambda1 > S::zero()) {
        return Err(Geom3dError::DegenerateNeighborhood {
            points: points.len(),
            rank: 0,
        });
    }
    if !(lambda2 > rank_tol) {
        return Err(Geom3dError::DegenerateNeighborhood {
            points: points.len(),
            rank: 1,
        });
    }
    let b1 = sign_normalized(column(&eigenvectors, order[0]));
    let b2 = sign_normalized(column(&eigenvectors, order[1]));
    let b3 = b1.cross(b2);
    Ok(LocalFrame {
        origin,
        b1,
        b2,
        b3,
    })
}

fn column<S: Scalar>(m: &[[S; 3]; 3], j: usize) -> Point3<S> {
    Point3::new(m[0][j], m[1][j], m[2][j])
}

/// Flip the vector if needed so its largest-magnitude component (lowest
/// index on ties) is positive.
fn sign_normalized<S: Scalar>(v: Point3<S>) -> Point3<S> {
    let comps = [v.x, v.y, v.z];
    let mut lead = 0;
    for (i, c) in comps.iter().enumerate().skip(1) {
        if c.abs() > comps[lead].abs() {
            lead = i;
        }
    }
    if comps[lead] < S::zero() {
        -v
    } else {
        v
    }
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
/// Returns `(eigenvalues, eigenvectors)` with eigenvector `j` stored in
/// column `j`. Deterministic: fixed sweep order and a fixed convergence
/// threshold.
fn jacobi_eigen<S: Scalar>(mut a: [[S; 3]; 3]) -> ([S; 3], [[S; 3]; 3]) {
    let mut v = [
        [S::one(), S::zero(), S::zero()],
        [S::zero(), S::one(), S::zero()],
        [S::zero(), S::zero(), S::one()],
    ];
    let scale = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .fold(S::zero(), |m, (i, j)| m.max(a[i][j].abs()));
    if scale == S::zero() {
        return ([S::zero(); 3], v);
    }
    let stop = scale * S::epsilon() * S::epsilon();
    for _ in 0..64 {
        let off = a[0][1].abs() + a[0][2].abs() + a[1][2].abs();
        if off <= stop {
            break;
        }
        for (p, q) in [(0usize, 1usize), (0, 2), (1, 2)] {
            if a[p][q] == S::zero() {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (cst::<S>(2.0) * a[p][q]);
            // The smaller-magnitude root of t² + 2tθ − 1 = 0, for stability.
            let t = theta.signum() / (theta.abs() + (theta * theta + S::one()).sqrt());
            let c = S::one() / (t * t + S::one()).sqrt();
            let s = t * c;
            let app = a[p][p];
            let aqq = a[q][q];
            let apq = a[p][q];
            a[p][p] = app - t * apq;
            a[q][q] = aqq + t * apq;
            a[p][q] = S::zero();
            a[q][p] = S::zero();
            let r = 3 - p - q;
            let arp = a[r][p];
            let arq = a[r][q];
            a[r][p] = c * arp - s * arq;
            a[p][r] = a[r][p];
            a[r][q] = s * arp + c * arq;
            a[q][r] = a[r][q];
            for row in &mut v {
                let vp = row[p];
                let vq = row[q];
                row[p] = c * vp - s * vq;
                row[q] = s * vp + c * vq;
            }
        }
    }
    ([a[0][0], a[1][1], a[2][2]], v)
}

/// One surface refinement step: split every face in four and fit every new
/// vertex (retained or edge midpoint) in its own local tangent frame.
///
/// For each new vertex the origin is the exact parent position (retained
/// vertex) or the exact edge midpoint — never a re-projection. Members are
/// the parent vertices strictly within `radius` in 3D; their in-plane
/// coordinates feed the planar rule as scattered sites, their heights as the
/// noisy samples, and the fitted height at the origin is lifted along the
/// estimated normal.
pub fn surface_refine_step<S: Scalar>(
    scheme: &Scheme<S>,
    mesh: &Triangulation3<S>,
    radius: S,
) -> Result<Triangulation3<S>, Geom3dError> {
    if !(radius > S::zero()) || !radius.is_finite() {
        return Err(Geom3dError::InvalidRadius {
            value: as_f64(radius),
        });
    }
    let parents = mesh.vertices();
    let topo = refine_topology(mesh.faces(), parents.len(), mesh.edges());
    let adjacency = mesh.vertex_face_adjacency();
    let grid = Grid3::build(parents, as_f64(radius) * (1.0 + 1e-6));
    let origin_of = |target: usize| -> Point3<S> {
        if target < parents.len() {
            parents[target]
        } else {
            let (a, b) = topo.map.parent_edge[target - parents.len()];
            parents[a].midpoint(parents[b])
        }
    };
    let target_count = parents.len() + topo.map.parent_edge.len();
    let vertices: Vec<Point3<S>> = (0..target_count)
        .into_par_iter()
        .map(|target| {
            fit_vertex(
                scheme,
                mesh,
                &adjacency,
                &grid,
                origin_of(target),
                radius,
            )
            .map_err(|e| e.at_vertex(target))
        })
        .collect::<Result<_, _>>()?;
    let refined = Triangulation3::from_parts_unchecked(vertices, topo.faces);
    debug_assert!(refined.validate().is_empty());
    Ok(refined)
}

fn fit_vertex<S: Scalar>(
    scheme: &Scheme<S>,
    mesh: &Triangulation3<S>,
    adjacency: &[Vec<usize>],
    grid: &Grid3,
    origin: Point3<S>,
    radius: S,
) -> Result<Point3<S>, Geom3dError> {
    let parents = mesh.vertices();
    let mut members: Vec<usize> = grid
        .candidates(origin)
        .filter(|&j| parents[j].dist(origin) < radius)
        .collect();
    members.sort_unstable();
    if members.is_empty() {
        return Err(Geom3dError::EmptyNeighborhood {
            radius: as_f64(radius),
        });
    }
    if !mesh::stencil_contains_face(&members, mesh.faces(), adjacency) {
        return Err(Geom3dError::NoFaceInStencil {
            radius: as_f64(radius),
            members: members.len(),
        });
    }
    let neighborhood: Vec<Point3<S>> = members.iter().map(|&j| parents[j]).collect();
    let frame = local_frame(origin, &neighborhood)?;
    let mut sites = Vec::with_capacity(neighborhood.len());
    let mut heights = Vec::with_capacity(neighborhood.len());
    for &p in &neighborhood {
        let (site, height) = frame.local_coordinates(p);
        sites.push(site);
        heights.push(height);
    }
    // In-plane distances never exceed the 3D distances, so every member
    // stays strictly inside the planar ball and keeps a valid weight.
    let mut ball = scheme.ball_from_points(Point2::zero(), radius, &sites)?;
    scheme.compute_coefficients(&mut ball)?;
    let coefficients = ball
        .coefficients
        .as_ref()
        .expect("coefficients were just computed");
    let mut fitted = S::zero();
    for (&m, &a) in ball.members.iter().zip(&coefficients.alpha) {
        fitted += a * heights[m];
    }
    Ok(frame.lift(fitted))
}

/// Iterated surface refinement. The ball radius is halved after every step,
/// mirroring the per-level shrinkage of the planar scheme.
pub fn surface_subdivide<S: Scalar>(
    scheme: &Scheme<S>,
    mesh: &Triangulation3<S>,
    radius: S,
    iterations: u32,
) -> Result<Triangulation3<S>, Geom3dError> {
    let mut current = mesh.clone();
    let mut r = radius;
    for _ in 0..iterations {
        current = surface_refine_step(scheme, &current, r)?;
        r *= cst::<S>(0.5);
    }
    Ok(current)
}

/// Uniform spatial hash over 3D points; cells at least as large as the query
/// radius so a 3×3×3 block covers every candidate.
struct Grid3 {
    cell: f64,
    map: HashMap<(i64, i64, i64), Vec<usize>>,
}

impl Grid3 {
    fn build<S: Scalar>(points: &[Point3<S>], cell: f64) -> Self {
        let mut map: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            map.entry(Self::key(cell, p)).or_default().push(i);
        }
        Self { cell, map }
    }

    fn key<S: Scalar>(cell: f64, p: &Point3<S>) -> (i64, i64, i64) {
        (
            (as_f64(p.x) / cell).floor() as i64,
            (as_f64(p.y) / cell).floor() as i64,
            (as_f64(p.z) / cell).floor() as i64,
        )
    }

    fn candidates<S: Scalar>(&self, center: Point3<S>) -> impl Iterator<Item = usize> + '_ {
        let (cx, cy, cz) = Self::key(self.cell, &center);
        (cx - 1..=cx + 1).flat_map(move |x| {
            (cy - 1..=cy + 1).flat_map(move |y| {
                (cz - 1..=cz + 1).flat_map(move |z| {
                    self.map
                        .get(&(x, y, z))
                        .map(|v| v.iter().copied())
                        .into_iter()
                        .flatten()
                })
            })
        })
    }
}
