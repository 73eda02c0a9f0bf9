//! Planar triangulations, validation, and topological midpoint refinement.
//!
//! A [`Triangulation2`] owns its vertices and triangles and derives the edge
//! set on construction. Refinement is purely topological: every face splits
//! into four children through the three edge midpoints, so vertex counts grow
//! by the edge count and face counts exactly quadruple. The value-carrying
//! side of a refinement level lives in [`DataLevel`], which pairs a mesh with
//! per-vertex samples and the stencil radius bookkeeping.
//!
//! # Invariants
//!
//! - Edges are stored as `(lo, hi)` index pairs, deduplicated and sorted, so
//!   identical meshes always produce identical edge tables.
//! - New midpoint vertices are appended after the parent vertices in
//!   ascending order of their parent edge `(lo, hi)`, making refinement
//!   deterministic and reproducible across runs.
//! - The four children of face `f` occupy child-face slots `4f .. 4f+4`
//!   (corner child at each original vertex in face order, then the central
//!   child).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{unit_row_det, Point2};
use crate::scalar::{as_f64, level_scale, Scalar};

/// A defect found by [`Triangulation2::validate`].
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MeshViolation {
    /// A face references a vertex index outside `0..vertex_count`.
    #[error("face {face} references vertex {vertex} but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        face: usize,
        vertex: usize,
        vertex_count: usize,
    },
    /// A face lists the same vertex more than once.
    #[error("duplicate index in face {face}")]
    DuplicateIndex { face: usize },
    /// The three vertices of a face are collinear (zero signed area).
    #[error("degenerate face {face}: vertices are collinear")]
    DegenerateFace { face: usize },
    /// A vertex coordinate is NaN or infinite.
    #[error("vertex {vertex} has a non-finite coordinate")]
    NonFiniteVertex { vertex: usize },
}

/// Errors from mesh construction and mesh-level queries.
#[derive(Clone, Debug, PartialEq, Error)]
pub enum MeshError {
    /// Construction rejected an invalid triangulation; all defects are listed.
    #[error("invalid triangulation: {} ({} defect(s) in total)", violations[0], violations.len())]
    Invalid { violations: Vec<MeshViolation> },
    /// The mesh has no edges, so edge-based quantities are undefined.
    #[error("mesh has no edges")]
    NoEdges,
    /// A per-vertex value vector does not match the vertex count.
    #[error("value count {values} does not match vertex count {vertices}")]
    ValueCountMismatch { values: usize, vertices: usize },
    /// The stencil base radius must be positive and finite.
    #[error("base radius {value} is not positive and finite")]
    InvalidBaseRadius { value: f64 },
}

/// Triangle mesh in the plane.
#[derive(Clone, Debug, PartialEq)]
pub struct Triangulation2<S> {
    vertices: Vec<Point2<S>>,
    faces: Vec<[usize; 3]>,
    edges: Vec<(usize, usize)>,
}

impl<S: Scalar> Triangulation2<S> {
    /// Build a validated triangulation. All defects are collected into the
    /// error so a caller can report every problem at once.
    pub fn new(vertices: Vec<Point2<S>>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let tri = Self::from_parts_unchecked(vertices, faces);
        let violations = tri.validate();
        if violations.is_empty() {
            Ok(tri)
        } else {
            Err(MeshError::Invalid { violations })
        }
    }

    /// Build without validation. Intended for defect reporting (construct,
    /// then [`validate`](Self::validate)) and for internal construction of
    /// meshes that are valid by construction.
    pub fn from_parts_unchecked(vertices: Vec<Point2<S>>, faces: Vec<[usize; 3]>) -> Self {
        let edges = derive_edges(&faces);
        Self {
            vertices,
            faces,
            edges,
        }
    }

    pub fn vertices(&self) -> &[Point2<S>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Unique undirected edges as `(lo, hi)` pairs in ascending order.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Collect every structural defect: out-of-range indices, repeated
    /// indices within a face, zero-area faces, non-finite coordinates.
    pub fn validate(&self) -> Vec<MeshViolation> {
        let mut out = Vec::new();
        for (vertex, p) in self.vertices.iter().enumerate() {
            if !p.is_finite() {
                out.push(MeshViolation::NonFiniteVertex { vertex });
            }
        }
        let n = self.vertices.len();
        for (face, idx) in self.faces.iter().enumerate() {
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
            let [a, b, c] = idx.map(|i| self.vertices[i]);
            if !(a.is_finite() && b.is_finite() && c.is_finite()) {
                continue; // already reported as non-finite vertices
            }
            if unit_row_det(a, b, c) == S::zero() {
                out.push(MeshViolation::DegenerateFace { face });
            }
        }
        out
    }

    /// Longest edge length. This is the resolution measure that stencil
    /// radii are compared against: a radius larger than the diameter
    /// guarantees every stencil contains a complete face.
    pub fn diameter(&self) -> Result<S, MeshError> {
        if self.edges.is_empty() {
            return Err(MeshError::NoEdges);
        }
        let mut best = S::zero();
        for &(a, b) in &self.edges {
            let d = self.vertices[a].dist(self.vertices[b]);
            if d > best {
                best = d;
            }
        }
        Ok(best)
    }

    /// Split every face into four through the edge midpoints.
    ///
    /// The child mesh keeps the parent vertices at their original indices and
    /// appends one midpoint per parent edge in ascending edge order. The
    /// returned map records which parent edge spawned each new vertex.
    pub fn midpoint_refine(&self) -> (Self, RefinementMap) {
        let topo = refine_topology(&self.faces, self.vertices.len(), &self.edges);
        let mut vertices = Vec::with_capacity(self.vertices.len() + self.edges.len());
        vertices.extend_from_slice(&self.vertices);
        for &(a, b) in &self.edges {
            vertices.push(self.vertices[a].midpoint(self.vertices[b]));
        }
        let child = Self::from_parts_unchecked(vertices, topo.faces);
        debug_assert!(child.validate().is_empty(), "refinement preserves validity");
        (child, topo.map)
    }

    /// Number of faces incident to each edge, parallel to [`edges`](Self::edges).
    /// Interior edges have count 2, boundary edges count 1.
    pub fn edge_face_counts(&self) -> Vec<u8> {
        let mut counts = vec![0u8; self.edges.len()];
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                if let Ok(i) = self.edges.binary_search(&key) {
                    counts[i] = counts[i].saturating_add(1);
                }
            }
        }
        counts
    }

    /// Faces incident to each vertex.
    pub fn vertex_face_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for (fi, f) in self.faces.iter().enumerate() {
            for &v in f {
                if v < adj.len() {
                    adj[v].push(fi);
                }
            }
        }
        adj
    }
}

/// Record of one midpoint refinement: which parent edge produced each
/// appended vertex. New vertex `old_count + i` is the midpoint of
/// `parent_edge[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementMap {
    pub old_count: usize,
    pub parent_edge: Vec<(usize, usize)>,
}

pub(crate) struct RefinedTopology {
    pub faces: Vec<[usize; 3]>,
    pub map: RefinementMap,
}

/// Unique undirected edges of a face list, sorted ascending.
pub(crate) fn derive_edges(faces: &[[usize; 3]]) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = faces
        .iter()
        .flat_map(|f| {
            [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])]
                .into_iter()
                .filter(|(a, b)| a != b)
                .map(|(a, b)| (a.min(b), a.max(b)))
        })
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Point-type-agnostic part of midpoint refinement: child faces plus the
/// parent-edge map. Shared by the planar and the surface mesh types.
pub(crate) fn refine_topology(
    faces: &[[usize; 3]],
    old_count: usize,
    edges: &[(usize, usize)],
) -> RefinedTopology {
    let midpoint = |a: usize, b: usize| -> usize {
        let key = (a.min(b), a.max(b));
        old_count
            + edges
                .binary_search(&key)
                .expect("every face edge is in the edge table")
    };
    let mut child_faces = Vec::with_capacity(faces.len() * 4);
    for f in faces {
        let [a, b, c] = *f;
        let mab = midpoint(a, b);
        let mbc = midpoint(b, c);
        let mca = midpoint(c, a);
        child_faces.push([a, mab, mca]);
        child_faces.push([b, mbc, mab]);
        child_faces.push([c, mca, mbc]);
        child_faces.push([mab, mbc, mca]);
    }
    RefinedTopology {
        faces: child_faces,
        map: RefinementMap {
            old_count,
            parent_edge: edges.to_vec(),
        },
    }
}

/// Does some face have all three corners inside `members`? `members` must be
/// sorted ascending; `adjacency` maps each vertex to its incident faces.
/// Shared by the planar engine and the surface pipeline, which both reject
/// stencils that do not contain a full face.
pub(crate) fn stencil_contains_face(
    members: &[usize],
    faces: &[[usize; 3]],
    adjacency: &[Vec<usize>],
) -> bool {
    let inside = |v: usize| members.binary_search(&v).is_ok();
    members.iter().any(|&m| {
        adjacency[m]
            .iter()
            .any(|&f| faces[f].iter().all(|&v| inside(v)))
    })
}

/// One refinement level: a mesh, a sample per vertex, and the stencil-radius
/// bookkeeping.
///
/// The effective stencil radius at level `k` is `base_l * 2^-k`
/// ([`ball_radius`](Self::ball_radius)); `base_l` is fixed when the level-0
/// data is created and carried through refinement unchanged.
#[derive(Clone, Debug, PartialEq)]
pub struct DataLevel<S> {
    pub tri: Triangulation2<S>,
    pub values: Vec<S>,
    pub level: u32,
    pub base_l: S,
}

impl<S: Scalar> DataLevel<S> {
    pub fn new(
        tri: Triangulation2<S>,
        values: Vec<S>,
        level: u32,
        base_l: S,
    ) -> Result<Self, MeshError> {
        if values.len() != tri.vertices().len() {
            return Err(MeshError::ValueCountMismatch {
                values: values.len(),
                vertices: tri.vertices().len(),
            });
        }
        if !(base_l > S::zero() && base_l.is_finite()) {
            return Err(MeshError::InvalidBaseRadius {
                value: as_f64(base_l),
            });
        }
        Ok(Self {
            tri,
            values,
            level,
            base_l,
        })
    }

    /// Effective stencil radius at this level: `base_l * 2^-level`.
    pub fn ball_radius(&self) -> S {
        self.base_l * level_scale::<S>(self.level)
    }
}
