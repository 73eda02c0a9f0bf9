//! File formats for meshes and data: OFF/OBJ triangulations, CSV value
//! tables, CSV limit-function fields, and JSON provenance records.
//!
//! All floating-point output is printed with 17 significant digits, so a
//! save/load round trip reproduces every `f64` bit-for-bit. Only triangle
//! faces are supported; any other polygon is a parse error naming the face
//! and its line.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point2, Point3};
use crate::geom3d::Triangulation3;
use crate::masks::LimitField;
use crate::mesh::{MeshError, Triangulation2};
use crate::weights::{WeightFunction, WeightTable};

/// Errors from reading or writing files.
#[derive(Debug, Error)]
pub enum IoError {
    /// Underlying filesystem failure, tagged with the path.
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    /// Malformed file content at a specific line.
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: String,
        line: usize,
        detail: String,
    },
    /// Mesh paths must end in `.off` or `.obj`.
    #[error("{path}: unsupported mesh format (expected .off or .obj)")]
    UnsupportedFormat { path: String },
    /// Malformed JSON document.
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    /// A weight specification string that names no known profile.
    #[error("invalid weight {spec:?}: {detail}")]
    WeightSpec { spec: String, detail: String },
    /// The loaded mesh failed structural validation.
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

fn path_str(path: &Path) -> String {
    path.display().to_string()
}

fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path_str(path),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::Io {
        path: path_str(path),
        source,
    })
}

fn parse_error(path: &Path, line: usize, detail: impl Into<String>) -> IoError {
    IoError::Parse {
        path: path_str(path),
        line,
        detail: detail.into(),
    }
}

/// Vertices (with source line numbers) and triangle faces of a parsed mesh
/// file, before any dimensional interpretation.
struct RawMesh {
    vertices: Vec<(Point3<f64>, usize)>,
    faces: Vec<[usize; 3]>,
}

#[derive(Clone, Copy, PartialEq)]
enum MeshFormat {
    Off,
    Obj,
}

fn detect_format(path: &Path) -> Result<MeshFormat, IoError> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("off") => Ok(MeshFormat::Off),
        Some("obj") => Ok(MeshFormat::Obj),
        _ => Err(IoError::UnsupportedFormat {
            path: path_str(path),
        }),
    }
}

fn parse_raw(path: &Path) -> Result<RawMesh, IoError> {
    let format = detect_format(path)?;
    let text = read_text(path)?;
    match format {
        MeshFormat::Off => parse_off(path, &text),
        MeshFormat::Obj => parse_obj(path, &text),
    }
}

/// Parse an OFF document: optional comments, an `OFF` keyword, the
/// `vertices faces edges` counts, vertex coordinate rows, then face rows of
/// the form `3 a b c`. Color columns after the coordinates are ignored.
fn parse_off(path: &Path, text: &str) -> Result<RawMesh, IoError> {
    // Token stream with line numbers; `#` starts a comment.
    let mut tokens: Vec<(&str, usize)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let content = line.split('#').next().unwrap_or("");
        for tok in content.split_whitespace() {
            tokens.push((tok, i + 1));
        }
    }
    let mut pos = 0usize;
    let mut next = |what: &str| -> Result<(&str, usize), IoError> {
        let t = tokens.get(pos).copied().ok_or_else(|| {
            parse_error(
                path,
                text.lines().count().max(1),
                format!("unexpected end of file, expected {what}"),
            )
        });
        pos += 1;
        t
    };

    let (keyword, line) = next("the OFF keyword")?;
    if keyword != "OFF" {
        return Err(parse_error(
            path,
            line,
            format!("expected the OFF keyword, found {keyword:?}"),
        ));
    }
    let mut counts = [0usize; 3];
    for (slot, what) in counts
        .iter_mut()
        .zip(["vertex count", "face count", "edge count"])
    {
        let (tok, line) = next(what)?;
        *slot = tok
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid {what} {tok:?}")))?;
    }

    let mut vertices = Vec::with_capacity(counts[0]);
    for v in 0..counts[0] {
        let mut coords = [0.0f64; 3];
        let mut coord_line = 0usize;
        for (k, c) in coords.iter_mut().enumerate() {
            let (tok, line) = next("a vertex coordinate")?;
            coord_line = line;
            *c = tok.parse().map_err(|_| {
                parse_error(
                    path,
                    line,
                    format!("invalid coordinate {tok:?} for vertex {v} (component {k})"),
                )
            })?;
        }
        vertices.push((Point3::new(coords[0], coords[1], coords[2]), coord_line));
    }

    let mut faces = Vec::with_capacity(counts[1]);
    for f in 0..counts[1] {
        let (tok, line) = next("a face vertex count")?;
        let arity: usize = tok
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid vertex count {tok:?} for face {f}")))?;
        if arity != 3 {
            return Err(parse_error(
                path,
                line,
                format!("face {f} has {arity} vertices; only triangles are supported"),
            ));
        }
        let mut ids = [0usize; 3];
        for id in &mut ids {
            let (tok, line) = next("a face vertex index")?;
            *id = tok.parse().map_err(|_| {
                parse_error(path, line, format!("invalid vertex index {tok:?} in face {f}"))
            })?;
        }
        faces.push(ids);
    }
    Ok(RawMesh { vertices, faces })
}

/// Parse the triangle subset of Wavefront OBJ: `v` rows with three
/// coordinates and `f` rows with three 1-based indices (optionally in the
/// `index/uv/normal` form, of which only the index is used). Any other row
/// kind is ignored.
fn parse_obj(path: &Path, text: &str) -> Result<RawMesh, IoError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<&str> = parts.collect();
                if coords.len() < 3 {
                    return Err(parse_error(
                        path,
                        line_no,
                        format!("vertex row has {} coordinates, expected 3", coords.len()),
                    ));
                }
                let mut point = [0.0f64; 3];
                for (c, tok) in point.iter_mut().zip(&coords) {
                    *c = tok.parse().map_err(|_| {
                        parse_error(path, line_no, format!("invalid coordinate {tok:?}"))
                    })?;
                }
                vertices.push((Point3::new(point[0], point[1], point[2]), line_no));
            }
            Some("f") => {
                let corners: Vec<&str> = parts.collect();
                if corners.len() != 3 {
                    return Err(parse_error(
                        path,
                        line_no,
                        format!(
                            "face {} has {} vertices; only triangles are supported",
                            faces.len(),
                            corners.len()
                        ),
                    ));
                }
                let mut ids = [0usize; 3];
                for (id, tok) in ids.iter_mut().zip(&corners) {
                    let index_part = tok.split('/').next().unwrap_or("");
                    let one_based: usize = index_part.parse().map_err(|_| {
                        parse_error(path, line_no, format!("invalid vertex reference {tok:?}"))
                    })?;
                    if one_based == 0 {
                        return Err(parse_error(
                            path,
                            line_no,
                            "OBJ vertex references are 1-based; found 0",
                        ));
                    }
                    *id = one_based - 1;
                }
                faces.push(ids);
            }
            _ => {}
        }
    }
    Ok(RawMesh { vertices, faces })
}

/// Load a surface triangulation from an OFF or OBJ file.
pub fn load_mesh3(path: impl AsRef<Path>) -> Result<Triangulation3<f64>, IoError> {
    let path = path.as_ref();
    let raw = parse_raw(path)?;
    let vertices = raw.vertices.into_iter().map(|(p, _)| p).collect();
    Ok(Triangulation3::new(vertices, raw.faces)?)
}

/// Load a planar triangulation from an OFF or OBJ file. Every vertex must
/// have a third coordinate of exactly zero; anything else is reported with
/// its line number rather than silently projected.
pub fn load_mesh2(path: impl AsRef<Path>) -> Result<Triangulation2<f64>, IoError> {
    let path = path.as_ref();
    let raw = parse_raw(path)?;
    let mut vertices = Vec::with_capacity(raw.vertices.len());
    for (i, &(p, line)) in raw.vertices.iter().enumerate() {
        if p.z != 0.0 {
            return Err(parse_error(
                path,
                line,
                format!("vertex {i} has z = {}; a planar mesh requires z = 0", p.z),
            ));
        }
        vertices.push(Point2::new(p.x, p.y));
    }
    Ok(Triangulation2::new(vertices, raw.faces)?)
}

fn format_mesh(
    vertices: impl ExactSizeIterator<Item = Point3<f64>>,
    faces: &[[usize; 3]],
    format: MeshFormat,
) -> String {
    let mut out = String::new();
    match format {
        MeshFormat::Off => {
            let _ = writeln!(out, "OFF");
            let _ = writeln!(out, "{} {} 0", vertices.len(), faces.len());
            for v in vertices {
                let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
            }
            for f in faces {
                let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
            }
        }
        MeshFormat::Obj => {
            for v in vertices {
                let _ = writeln!(out, "v {:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
            }
            for f in faces {
                let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
            }
        }
    }
    out
}

/// Save a surface triangulation as OFF or OBJ, chosen by the extension.
pub fn save_mesh3(path: impl AsRef<Path>, mesh: &Triangulation3<f64>) -> Result<(), IoError> {
    let path = path.as_ref();
    let format = detect_format(path)?;
    let text = format_mesh(mesh.vertices().iter().copied(), mesh.faces(), format);
    write_text(path, &text)
}

/// Save a planar triangulation as OFF or OBJ (z = 0), chosen by the
/// extension.
pub fn save_mesh2(path: impl AsRef<Path>, mesh: &Triangulation2<f64>) -> Result<(), IoError> {
    let path = path.as_ref();
    let format = detect_format(path)?;
    let text = format_mesh(
        mesh.vertices().iter().map(|&v| Point3::new(v.x, v.y, 0.0)),
        mesh.faces(),
        format,
    );
    write_text(path, &text)
}

/// Save per-vertex values as a two-column CSV (`vertex_index,value`).
pub fn save_values(path: impl AsRef<Path>, values: &[f64]) -> Result<(), IoError> {
    let mut out = String::from("vertex_index,value\n");
    for (i, v) in values.iter().enumerate() {
        let _ = writeln!(out, "{i},{v:.16e}");
    }
    write_text(path.as_ref(), &out)
}

/// Load per-vertex values from a [`save_values`] CSV. Row indices must be
/// the consecutive vertex indices starting at zero.
pub fn load_values(path: impl AsRef<Path>) -> Result<Vec<f64>, IoError> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == "vertex_index,value" => {}
        Some((i, header)) => {
            return Err(parse_error(
                path,
                i + 1,
                format!("expected header \"vertex_index,value\", found {header:?}"),
            ))
        }
        None => return Err(parse_error(path, 1, "empty file")),
    }
    let mut values = Vec::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (index_tok, value_tok) = line
            .split_once(',')
            .ok_or_else(|| parse_error(path, line_no, "expected \"index,value\""))?;
        let index: usize = index_tok
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("invalid index {index_tok:?}")))?;
        if index != values.len() {
            return Err(parse_error(
                path,
                line_no,
                format!("expected vertex index {}, found {index}", values.len()),
            ));
        }
        let value: f64 = value_tok
            .trim()
            .parse()
            .map_err(|_| parse_error(path, line_no, format!("invalid value {value_tok:?}")))?;
        values.push(value);
    }
    Ok(values)
}

/// Vertex count of one refinement level, for provenance records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: u32,
    pub vertices: usize,
}

/// Reproducibility record saved beside refinement outputs: everything
/// needed to regenerate them deterministically.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Weight profile, as a [`parse_weight_spec`] string.
    pub weight: String,
    /// Ball radius at the coarsest level.
    pub radius: f64,
    /// Whether the radius was derived from the mesh diameter rather than
    /// given explicitly.
    pub auto_radius: bool,
    /// Number of refinement iterations applied.
    pub iterations: u32,
    /// Seed of the noise generator, when noise was injected.
    pub seed: Option<u64>,
    /// Standard deviation of injected noise, when any.
    pub noise_sd: Option<f64>,
    /// Vertex count at each level, coarsest first.
    pub levels: Vec<LevelCount>,
}

impl Provenance {
    /// Serialize to pretty-printed JSON at `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), IoError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|source| IoError::Json {
            path: path_str(path),
            source,
        })?;
        text.push('\n');
        write_text(path, &text)
    }

    /// Load a provenance record from JSON.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, IoError> {
        let path = path.as_ref();
        let text = read_text(path)?;
        serde_json::from_str(&text).map_err(|source| IoError::Json {
            path: path_str(path),
            source,
        })
    }
}

/// Parse a weight profile name: `constant`, `hat`, `gaussian`, or
/// `table:v0,v1,...` (piecewise-linear samples over `[0, 1]`).
pub fn parse_weight_spec(spec: &str) -> Result<WeightFunction<f64>, IoError> {
    match spec {
        "constant" => Ok(WeightFunction::Constant),
        "hat" => Ok(WeightFunction::Hat),
        "gaussian" => Ok(WeightFunction::Gaussian),
        _ => {
            if let Some(list) = spec.strip_prefix("table:") {
                let mut samples = Vec::new();
                for tok in list.split(',') {
                    let v: f64 = tok.trim().parse().map_err(|_| IoError::WeightSpec {
                        spec: spec.to_owned(),
                        detail: format!("invalid sample {tok:?}"),
                    })?;
                    samples.push(v);
                }
                let table = WeightTable::new(samples).map_err(|e| IoError::WeightSpec {
                    spec: spec.to_owned(),
                    detail: e.to_string(),
                })?;
                Ok(WeightFunction::Tabulated(table))
            } else {
                Err(IoError::WeightSpec {
                    spec: spec.to_owned(),
                    detail: "expected constant, hat, gaussian, or table:v0,v1,...".to_owned(),
                })
            }
        }
    }
}

/// Save a limit-function field as CSV: lattice coordinates, position, and
/// value per vertex (`u1,u2,x,y,value`).
pub fn save_limit_field(path: impl AsRef<Path>, field: &LimitField<f64>) -> Result<(), IoError> {
    let mut out = String::from("u1,u2,x,y,value\n");
    for ((&(u1, u2), &v), &z) in field
        .lattice
        .iter()
        .zip(field.tri.vertices())
        .zip(&field.values)
    {
        let _ = writeln!(out, "{u1},{u2},{:.16e},{:.16e},{z:.16e}", v.x, v.y);
    }
    write_text(path.as_ref(), &out)
}
