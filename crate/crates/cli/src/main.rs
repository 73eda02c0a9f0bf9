//! `lball`: command-line driver for ball-stencil weighted least squares
//! subdivision.
//!
//! Every failure exits nonzero and prints `error[<code>]: <message>` on
//! stderr, where `<code>` is a short stable slug suitable for scripting.
//! All numeric output uses `.` as the decimal separator regardless of
//! locale, and every run is deterministic given its flags and seeds.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lball_subdiv::analysis::AnalysisError;
use lball_subdiv::baselines::{mls1_eval, shepard_eval, BaselineError, ScatteredData};
use lball_subdiv::geom3d::{surface_refine_step, Geom3dError};
use lball_subdiv::io::{self, IoError, LevelCount, Provenance};
use lball_subdiv::masks::{basic_limit_function, derive_mask, MaskError};
use lball_subdiv::meshgen::{
    add_radial_noise, icosphere, jittered_patch, sample_function_with_noise, scattered_mesh,
    MeshgenError, ScatterConfig,
};
use lball_subdiv::{
    check_reproduction, error_metrics, theta, DataLevel, GridKind, MeshError, Point2d, Real, Rect,
    Scheme, Tri2d, Tri3d, UniformGrid, WeightFunction, WlsError,
};

/// Weighted least squares subdivision of noisy data on triangle meshes.
#[derive(Parser)]
#[command(
    name = "lball",
    version,
    about,
    after_help = "Worker threads default to the number of cores; set RAYON_NUM_THREADS to override."
)]
struct Cli {
    /// Log verbosity on stderr (-v info, -vv debug, -vvv trace).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Refine noisy samples on a triangulation and write the result.
    Refine(RefineArgs),
    /// Print the stationary mask of a uniform grid.
    Mask(MaskArgs),
    /// Sample the basic limit function on a uniform grid.
    Limitfn(LimitfnArgs),
    /// Run fast self-checks and print a JSON report.
    Verify,
    /// Evaluate a scattered-data baseline at chosen points.
    Baseline(BaselineArgs),
    /// Compare subdivision against baselines on a noisy sampling experiment.
    Experiment(ExperimentArgs),
    /// Denoise a surface mesh by refining it in local tangent frames.
    Surface(SurfaceArgs),
}

#[derive(Args)]
struct RefineArgs {
    /// Mesh file (.off/.obj) or generator: `scattered:<seed>` |
    /// `patch:<half_width>[:<jitter>[:<seed>]]`.
    #[arg(long)]
    mesh: String,
    #[command(flatten)]
    data: DataArgs,
    /// Weight profile: constant | hat | gaussian | table:v0,v1,...
    #[arg(long, default_value = "hat")]
    weight: String,
    /// Ball radius at level 0, or `auto` (1.6 × mesh diameter).
    #[arg(long, default_value = "auto")]
    radius: String,
    /// Number of refinement iterations.
    #[arg(long, default_value_t = 1)]
    iterations: u32,
    /// Write `<prefix>.off`, `<prefix>.csv`, and `<prefix>.json`.
    #[arg(long)]
    out_prefix: Option<PathBuf>,
}

/// Where the level-0 samples come from: a value file or a sampled function.
#[derive(Args)]
struct DataArgs {
    /// Per-vertex values as CSV (vertex_index,value).
    #[arg(long, conflicts_with = "function")]
    values: Option<PathBuf>,
    /// Sampled function: sin-cos | constant:<c> | linear:<a>,<b>,<c>.
    #[arg(long)]
    function: Option<String>,
    /// Standard deviation of Gaussian noise added to sampled functions.
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    /// Seed for the noise generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MaskArgs {
    /// Grid family.
    #[arg(long, value_enum)]
    grid: GridChoice,
    /// Weight profile: constant | hat | gaussian | table:v0,v1,...
    #[arg(long, default_value = "constant")]
    weight: String,
    /// Ball radius at level 0.
    #[arg(long)]
    radius: f64,
    /// Output layout.
    #[arg(long, value_enum, default_value_t = MaskFormat::Csv)]
    format: MaskFormat,
}

#[derive(Args)]
struct LimitfnArgs {
    /// Grid family.
    #[arg(long, value_enum)]
    grid: GridChoice,
    /// Weight profile: constant | hat | gaussian | table:v0,v1,...
    #[arg(long, default_value = "constant")]
    weight: String,
    /// Ball radius at level 0.
    #[arg(long)]
    radius: f64,
    /// Number of refinement iterations.
    #[arg(long, default_value_t = 4)]
    iterations: u32,
    /// Patch half-width in lattice steps (default: wide enough for the
    /// mask support to act stationarily near the center).
    #[arg(long)]
    half_width: Option<i64>,
    /// Output CSV path (u1,u2,x,y,value).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BaselineArgs {
    /// Mesh file or generator spec (sites are its vertices).
    #[arg(long)]
    mesh: String,
    #[command(flatten)]
    data: DataArgs,
    /// Baseline estimator.
    #[arg(long, value_enum)]
    method: BaselineMethod,
    /// Weight profile: constant | hat | gaussian | table:v0,v1,...
    #[arg(long, default_value = "hat")]
    weight: String,
    /// Neighborhood bandwidth (weights vanish at this distance).
    #[arg(long)]
    bandwidth: f64,
    /// Evaluation point `x,y`; repeat for several points.
    #[arg(long = "at", required = true, allow_hyphen_values = true)]
    at: Vec<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Mesh file or generator spec (default: the 227-vertex scattered
    /// fixture seeded by --mesh-seed).
    #[arg(long)]
    mesh: Option<String>,
    /// Seed of the generated scattered fixture when --mesh is omitted.
    #[arg(long, default_value_t = 100)]
    mesh_seed: u64,
    /// Sampled function: sin-cos | constant:<c> | linear:<a>,<b>,<c>.
    #[arg(long, default_value = "sin-cos")]
    function: String,
    /// Standard deviation of the Gaussian sample noise.
    #[arg(long, default_value_t = 0.2)]
    noise_sd: f64,
    /// Seed for the noise generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Methods to tabulate.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = vec![
        Method::Subdivision,
        Method::Shepard,
        Method::Mls,
    ])]
    methods: Vec<Method>,
    /// Weight profile: constant | hat | gaussian | table:v0,v1,...
    #[arg(long, default_value = "hat")]
    weight: String,
    /// Ball radius / bandwidth at level 0, or `auto`.
    #[arg(long, default_value = "1")]
    radius: String,
    /// Number of refinement iterations.
    #[arg(long, default_value_t = 5)]
    iterations: u32,
    /// Error region `x0,y0,x1,y1`.
    #[arg(long, default_value = "-1,-1,1,1", allow_hyphen_values = true)]
    region: String,
}

#[derive(Args)]
struct SurfaceArgs {
    /// Mesh file (.off/.obj) or generator: `icosphere:<subdivisions>`.
    #[arg(long)]
    mesh: String,
    /// Standard deviation of radial Gaussian noise added before refining.
    #[arg(long, default_value_t = 0.0)]
    noise_sd: f64,
    /// Seed for the noise generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight profile: constant | hat | gaussian | table:v0,v1,...
    #[arg(long, default_value = "hat")]
    weight: String,
    /// Ball radius at level 0, or `auto` (1.6 × mesh diameter).
    #[arg(long, default_value = "auto")]
    radius: String,
    /// Number of refinement iterations (radius halves per step).
    #[arg(long, default_value_t = 1)]
    iterations: u32,
    /// Print per-level RMS deviation of vertex radii from 1 (unit-sphere
    /// meshes).
    #[arg(long)]
    radial_stats: bool,
    /// Write the refined mesh here (.off/.obj).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GridChoice {
    Equilateral,
    Rectangular,
}

impl GridChoice {
    fn grid(self) -> UniformGrid<Real> {
        match self {
            GridChoice::Equilateral => UniformGrid::equilateral(),
            GridChoice::Rectangular => UniformGrid::rectangular(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MaskFormat {
    /// One `parity,du1,du2,coefficient` row per stencil entry.
    Csv,
    /// The interleaved 7×7 coefficient matrix.
    Matrix,
    /// The full mask structure as JSON.
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineMethod {
    Shepard,
    Mls,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Subdivision,
    Shepard,
    Mls,
}

/// Anything a subcommand can fail with, tagged with a stable slug for the
/// `error[<code>]:` stderr line.
#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Meshgen(#[from] MeshgenError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Wls(#[from] WlsError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Surface(#[from] Geom3dError),
    #[error("{failed} of {total} checks failed")]
    VerifyFailed { failed: usize, total: usize },
    #[error("writing to stdout: {0}")]
    Print(#[from] std::io::Error),
}

impl CliError {
    fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(inner) => match inner {
                IoError::Io { .. } => "io",
                IoError::Parse { .. } => "parse",
                IoError::UnsupportedFormat { .. } => "format",
                IoError::Json { .. } => "json",
                IoError::WeightSpec { .. } => "weight",
                IoError::Mesh(_) => "mesh",
            },
            CliError::Mesh(_) => "mesh",
            CliError::Meshgen(_) => "meshgen",
            CliError::Mask(_) => "mask",
            CliError::Wls(_) => "wls",
            CliError::Analysis(_) => "analysis",
            CliError::Baseline(_) => "baseline",
            CliError::Surface(_) => "surface",
            CliError::VerifyFailed { .. } => "verify",
            CliError::Print(_) => "io",
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let stdout = std::io::stdout().lock();
    let mut out = std::io::BufWriter::new(stdout);
    let result = run(cli.command, &mut out).and_then(|()| Ok(out.flush()?));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // A reader that stopped listening (e.g. `lball ... | head`) is not
        // an error worth reporting, but the exit must stay nonzero.
        Err(CliError::Print(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => {
            ExitCode::from(141)
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
}

fn run(command: Command, out: &mut impl Write) -> Result<(), CliError> {
    match command {
        Command::Refine(args) => run_refine(args, out),
        Command::Mask(args) => run_mask(args, out),
        Command::Limitfn(args) => run_limitfn(args, out),
        Command::Verify => run_verify(out),
        Command::Baseline(args) => run_baseline(args, out),
        Command::Experiment(args) => run_experiment(args, out),
        Command::Surface(args) => run_surface(args, out),
    }
}

// ---------------------------------------------------------------------------
// Shared argument interpretation
// ---------------------------------------------------------------------------

/// Load a planar mesh from a file or build one from a generator spec.
fn planar_mesh(spec: &str) -> Result<Tri2d, CliError> {
    if let Some(seed) = spec.strip_prefix("scattered:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| config_error(format!("invalid seed in mesh spec {spec:?}")))?;
        return Ok(scattered_mesh(&ScatterConfig::default(), seed)?);
    }
    if let Some(rest) = spec.strip_prefix("patch:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() > 3 {
            return Err(config_error(format!(
                "mesh spec {spec:?} has {} fields, expected patch:<half_width>[:<jitter>[:<seed>]]",
                parts.len()
            )));
        }
        let half_width: i64 = parts[0]
            .parse()
            .map_err(|_| config_error(format!("invalid half-width in mesh spec {spec:?}")))?;
        let jitter: f64 = match parts.get(1) {
            Some(tok) => tok
                .parse()
                .map_err(|_| config_error(format!("invalid jitter in mesh spec {spec:?}")))?,
            None => 0.3,
        };
        let seed: u64 = match parts.get(2) {
            Some(tok) => tok
                .parse()
                .map_err(|_| config_error(format!("invalid seed in mesh spec {spec:?}")))?,
            None => 1,
        };
        let grid = UniformGrid::equilateral();
        return Ok(jittered_patch(&grid, half_width, jitter, seed)?);
    }
    Ok(io::load_mesh2(spec)?)
}

/// Load a surface mesh from a file or build an icosphere.
fn surface_mesh(spec: &str) -> Result<Tri3d, CliError> {
    if let Some(subdivisions) = spec.strip_prefix("icosphere:") {
        let subdivisions: u32 = subdivisions
            .parse()
            .map_err(|_| config_error(format!("invalid subdivisions in mesh spec {spec:?}")))?;
        return Ok(icosphere(subdivisions));
    }
    Ok(io::load_mesh3(spec)?)
}

/// Interpret a sampled-function spec.
fn parse_function(spec: &str) -> Result<Box<dyn Fn(Point2d) -> Real + Sync>, CliError> {
    if spec == "sin-cos" {
        return Ok(Box::new(|p: Point2d| p.x.sin() * p.y.cos()));
    }
    if let Some(c) = spec.strip_prefix("constant:") {
        let c: f64 = c
            .parse()
            .map_err(|_| config_error(format!("invalid constant in function spec {spec:?}")))?;
        return Ok(Box::new(move |_| c));
    }
    if let Some(rest) = spec.strip_prefix("linear:") {
        let coeffs: Vec<f64> = rest
            .split(',')
            .map(|tok| tok.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| config_error(format!("invalid coefficient in function spec {spec:?}")))?;
        let [a, b, c]: [f64; 3] = coeffs.try_into().map_err(|_| {
            config_error(format!(
                "function spec {spec:?} needs exactly three coefficients"
            ))
        })?;
        return Ok(Box::new(move |p: Point2d| a + b * p.x + c * p.y));
    }
    Err(config_error(format!(
        "unknown function {spec:?}: expected sin-cos, constant:<c>, or linear:<a>,<b>,<c>"
    )))
}

/// Level-0 values together with the noise standard deviation and seed that
/// were actually applied (`None` when the data came in clean).
type SampledValues = (Vec<Real>, Option<f64>, Option<u64>);

/// Level-0 values for a mesh, from a file or a sampled (optionally noisy)
/// function. Returns the values plus the noise parameters actually used.
fn level0_values(tri: &Tri2d, data: &DataArgs) -> Result<SampledValues, CliError> {
    if !(data.noise_sd >= 0.0 && data.noise_sd.is_finite()) {
        return Err(config_error(format!(
            "noise sd must be finite and non-negative, got {}",
            data.noise_sd
        )));
    }
    match (&data.values, &data.function) {
        (Some(path), None) => {
            let values = io::load_values(path)?;
            if values.len() != tri.vertices().len() {
                return Err(config_error(format!(
                    "{} values for {} vertices",
                    values.len(),
                    tri.vertices().len()
                )));
            }
            Ok((values, None, None))
        }
        (None, Some(spec)) => {
            let f = parse_function(spec)?;
            let values = sample_function_with_noise(tri, f, data.noise_sd, data.seed);
            if data.noise_sd > 0.0 {
                Ok((values, Some(data.noise_sd), Some(data.seed)))
            } else {
                Ok((values, None, None))
            }
        }
        (None, None) => Err(config_error("provide --values or --function")),
        (Some(_), Some(_)) => unreachable!("clap rejects --values with --function"),
    }
}

/// Resolve a `--radius` flag against the mesh diameter: `auto` means
/// 1.6 × diameter, and an explicit radius must exceed the diameter for the
/// stencils to stay nonempty through refinement.
fn resolve_radius(spec: &str, diameter: f64) -> Result<f64, CliError> {
    if spec == "auto" {
        return Ok(1.6 * diameter);
    }
    let radius: f64 = spec
        .parse()
        .map_err(|_| config_error(format!("invalid radius {spec:?}: expected a number or auto")))?;
    if !radius.is_finite() || radius <= diameter {
        return Err(config_error(format!(
            "radius {radius} must be a finite number exceeding the mesh \
             diameter {diameter:.6}; smaller balls leave stencils empty"
        )));
    }
    Ok(radius)
}

fn parse_point(spec: &str) -> Result<Point2d, CliError> {
    let coords: Vec<f64> = spec
        .split(',')
        .map(|tok| tok.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_error(format!("invalid point {spec:?}, expected x,y")))?;
    match coords[..] {
        [x, y] => Ok(Point2d::new(x, y)),
        _ => Err(config_error(format!(
            "point {spec:?} has {} coordinates, expected 2",
            coords.len()
        ))),
    }
}

fn parse_region(spec: &str) -> Result<Rect<Real>, CliError> {
    let bounds: Vec<f64> = spec
        .split(',')
        .map(|tok| tok.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| config_error(format!("invalid region {spec:?}, expected x0,y0,x1,y1")))?;
    match bounds[..] {
        [x0, y0, x1, y1] if x0 < x1 && y0 < y1 => Ok(Rect::from_bounds(x0, y0, x1, y1)),
        [_, _, _, _] => Err(config_error(format!(
            "region {spec:?} is empty: require x0 < x1 and y0 < y1"
        ))),
        _ => Err(config_error(format!(
            "region {spec:?} has {} bounds, expected 4",
            bounds.len()
        ))),
    }
}

// ---------------------------------------------------------------------------
// refine
// ---------------------------------------------------------------------------

fn run_refine(args: RefineArgs, out: &mut impl Write) -> Result<(), CliError> {
    let tri = planar_mesh(&args.mesh)?;
    let (values, noise_sd, seed) = level0_values(&tri, &args.data)?;
    let weight = io::parse_weight_spec(&args.weight)?;
    let auto_radius = args.radius == "auto";
    let radius = resolve_radius(&args.radius, tri.diameter()?)?;

    let scheme = Scheme::new(weight);
    let initial = DataLevel::new(tri, values, 0, radius)?;
    let levels = scheme.subdivide_with_trace(&initial, args.iterations)?;
    for level in &levels {
        writeln!(out, "level {}: {} vertices", level.level, level.values.len())?;
    }

    if let Some(prefix) = &args.out_prefix {
        let finest = levels.last().expect("trace is nonempty");
        let mesh_path = prefix.with_extension("off");
        let values_path = prefix.with_extension("csv");
        let provenance_path = prefix.with_extension("json");
        io::save_mesh2(&mesh_path, &finest.tri)?;
        io::save_values(&values_path, &finest.values)?;
        Provenance {
            weight: args.weight.clone(),
            radius,
            auto_radius,
            iterations: args.iterations,
            seed,
            noise_sd,
            levels: levels
                .iter()
                .map(|l| LevelCount {
                    level: l.level,
                    vertices: l.values.len(),
                })
                .collect(),
        }
        .save(&provenance_path)?;
        writeln!(out, "wrote {}", mesh_path.display())?;
        writeln!(out, "wrote {}", values_path.display())?;
        writeln!(out, "wrote {}", provenance_path.display())?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// mask / limitfn
// ---------------------------------------------------------------------------

fn run_mask(args: MaskArgs, out: &mut impl Write) -> Result<(), CliError> {
    let weight = io::parse_weight_spec(&args.weight)?;
    let scheme = Scheme::new(weight);
    let mask = derive_mask(&args.grid.grid(), &scheme, args.radius)?;
    match args.format {
        MaskFormat::Csv => {
            writeln!(out, "parity,du1,du2,coefficient")?;
            for rule in &mask.rules {
                for (&(u1, u2), &a) in rule.offsets.iter().zip(&rule.coefficients) {
                    writeln!(out, "{}{},{u1},{u2},{a:.16e}", rule.parity.0, rule.parity.1)?;
                }
            }
        }
        MaskFormat::Matrix => {
            let matrix = mask.matrix()?;
            for row in &matrix {
                let cells: Vec<String> = row.iter().map(|a| format!("{a:.16e}")).collect();
                writeln!(out, "{}", cells.join(" "))?;
            }
        }
        MaskFormat::Json => {
            writeln!(out, "{}",
                serde_json::to_string_pretty(&mask).expect("mask serializes")
            )?;
        }
    }
    Ok(())
}

fn run_limitfn(args: LimitfnArgs, out: &mut impl Write) -> Result<(), CliError> {
    let weight = io::parse_weight_spec(&args.weight)?;
    let scheme = Scheme::new(weight);
    let field = basic_limit_function(
        &args.grid.grid(),
        &scheme,
        args.radius,
        args.iterations,
        args.half_width,
    )?;
    io::save_limit_field(&args.out, &field)?;
    writeln!(out, "wrote {} ({} vertices at level {})",
        args.out.display(),
        field.values.len(),
        field.level
    )?;
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct Check {
    name: &'static str,
    passed: bool,
    /// Measured deviation or value, compared against `bound`.
    measured: f64,
    bound: f64,
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    checks: Vec<Check>,
}

/// Maximum entrywise difference between a derived mask and the reference
/// construction for the same grid.
fn mask_deviation(kind: GridKind, weight: WeightFunction<Real>, radius: f64) -> Result<f64, CliError> {
    let grid = match kind {
        GridKind::Equilateral => UniformGrid::equilateral(),
        GridKind::Rectangular => UniformGrid::rectangular(),
        GridKind::Custom => return Err(config_error("no reference mask for custom grids")),
    };
    let derived = derive_mask(&grid, &Scheme::new(weight.clone()), radius)?.matrix()?;
    let reference = lball_subdiv::reference_mask(kind, &weight, radius)?.matrix()?;
    let mut worst = 0.0f64;
    for (drow, rrow) in derived.iter().zip(&reference) {
        for (d, r) in drow.iter().zip(rrow) {
            worst = worst.max((d - r).abs());
        }
    }
    Ok(worst)
}

fn run_verify(out: &mut impl Write) -> Result<(), CliError> {
    let mut checks = Vec::new();

    let eq_const = mask_deviation(GridKind::Equilateral, WeightFunction::Constant, 1.6)?;
    checks.push(Check {
        name: "equilateral-constant-mask-matches-reference",
        passed: eq_const <= 1e-12,
        measured: eq_const,
        bound: 1e-12,
    });
    let rect_const = mask_deviation(GridKind::Rectangular, WeightFunction::Constant, 1.7)?;
    checks.push(Check {
        name: "rectangular-constant-mask-matches-reference",
        passed: rect_const <= 1e-12,
        measured: rect_const,
        bound: 1e-12,
    });
    let eq_hat = mask_deviation(GridKind::Equilateral, WeightFunction::Hat, 1.6)?;
    checks.push(Check {
        name: "equilateral-hat-mask-matches-reference",
        passed: eq_hat <= 1e-12,
        measured: eq_hat,
        bound: 1e-12,
    });
    let rect_hat = mask_deviation(GridKind::Rectangular, WeightFunction::Hat, 1.7)?;
    checks.push(Check {
        name: "rectangular-hat-mask-matches-reference",
        passed: rect_hat <= 1e-12,
        measured: rect_hat,
        bound: 1e-12,
    });

    // One-step noise variance contraction on the equilateral grid: the
    // unit-weight factor is exactly 1/7.
    let patch = UniformGrid::<Real>::equilateral().patch(5);
    let zeros = vec![0.0; patch.tri.vertices().len()];
    let level = DataLevel::new(patch.tri.clone(), zeros, 0, 1.6)?;
    let scheme = Scheme::new(WeightFunction::Constant);
    let factor = theta(&scheme, &level, Some(&Rect::from_bounds(-1.0, -1.0, 1.0, 1.0)))?;
    checks.push(Check {
        name: "equilateral-variance-factor-is-one-seventh",
        passed: factor == 1.0 / 7.0,
        measured: factor,
        bound: 1.0 / 7.0,
    });

    // Linear reproduction and partition of unity on an irregular mesh.
    let tri = jittered_patch(&UniformGrid::<Real>::equilateral(), 4, 0.4, 11)?;
    let reproduction = check_reproduction(&scheme, &tri, 1.6, (0.4, -1.3, 0.7))?;
    checks.push(Check {
        name: "linear-data-reproduced-through-one-step",
        passed: reproduction <= 1e-12,
        measured: reproduction,
        bound: 1e-12,
    });

    let zeros = vec![0.0; tri.vertices().len()];
    let level = DataLevel::new(tri, zeros, 0, 1.6)?;
    let (child, _) = level.tri.midpoint_refine();
    let operator = scheme.refinement_operator(&level, child.vertices())?;
    let mut unity = 0.0f64;
    for target in 0..child.vertices().len() {
        let (_, coefficients) = operator.row(target);
        let sum: f64 = coefficients.iter().sum();
        unity = unity.max((sum - 1.0).abs());
    }
    checks.push(Check {
        name: "stencil-coefficients-sum-to-one",
        passed: unity <= 1e-12,
        measured: unity,
        bound: 1e-12,
    });

    let failed = checks.iter().filter(|c| !c.passed).count();
    let report = VerifyReport {
        passed: failed == 0,
        checks,
    };
    writeln!(out, "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    )?;
    if failed > 0 {
        return Err(CliError::VerifyFailed {
            failed,
            total: report.checks.len(),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// baseline
// ---------------------------------------------------------------------------

fn run_baseline(args: BaselineArgs, out: &mut impl Write) -> Result<(), CliError> {
    let tri = planar_mesh(&args.mesh)?;
    let (values, _, _) = level0_values(&tri, &args.data)?;
    let weight = io::parse_weight_spec(&args.weight)?;
    let data = ScatteredData::new(tri.vertices().to_vec(), values)?;

    writeln!(out, "x,y,value")?;
    for spec in &args.at {
        let target = parse_point(spec)?;
        let value = match args.method {
            BaselineMethod::Shepard => shepard_eval(&data, &weight, args.bandwidth, target)?,
            BaselineMethod::Mls => mls1_eval(&data, &weight, args.bandwidth, target)?,
        };
        writeln!(out, "{},{},{value:.16e}", target.x, target.y)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// experiment
// ---------------------------------------------------------------------------

fn run_experiment(args: ExperimentArgs, out: &mut impl Write) -> Result<(), CliError> {
    if args.methods.is_empty() {
        return Err(config_error("select at least one method"));
    }
    let tri = match &args.mesh {
        Some(spec) => planar_mesh(spec)?,
        None => scattered_mesh(&ScatterConfig::default(), args.mesh_seed)?,
    };
    let data = DataArgs {
        values: None,
        function: Some(args.function.clone()),
        noise_sd: args.noise_sd,
        seed: args.seed,
    };
    let (noisy, _, _) = level0_values(&tri, &data)?;
    let reference = parse_function(&args.function)?;
    let weight = io::parse_weight_spec(&args.weight)?;
    let region = parse_region(&args.region)?;
    let radius = resolve_radius(&args.radius, tri.diameter()?)?;

    // Every method is scored on the same evaluation set: the vertices of
    // the uniformly refined mesh after `iterations` midpoint splits (the
    // subdivision scheme's own finest vertex set).
    let mut finest = tri.clone();
    for _ in 0..args.iterations {
        finest = finest.midpoint_refine().0;
    }
    let targets = finest.vertices();

    writeln!(out, "method,weight,radius,e2,einf")?;
    let initial = error_metrics(tri.vertices(), &noisy, &reference, &region)?;
    writeln!(out, "initial,-,-,{:.6e},{:.6e}", initial.e2, initial.einf)?;

    let weight_name = weight.describe();
    for method in [Method::Subdivision, Method::Shepard, Method::Mls] {
        if !args.methods.contains(&method) {
            continue;
        }
        let (name, values) = match method {
            Method::Subdivision => {
                let initial = DataLevel::new(tri.clone(), noisy.clone(), 0, radius)?;
                let scheme = Scheme::new(weight.clone());
                let level = scheme.subdivide(&initial, args.iterations)?;
                ("subdivision", level.values)
            }
            Method::Shepard => {
                let data = ScatteredData::new(tri.vertices().to_vec(), noisy.clone())?;
                let values = targets
                    .iter()
                    .map(|&p| shepard_eval(&data, &weight, radius, p))
                    .collect::<Result<Vec<_>, _>>()?;
                ("shepard", values)
            }
            Method::Mls => {
                let data = ScatteredData::new(tri.vertices().to_vec(), noisy.clone())?;
                let values = targets
                    .iter()
                    .map(|&p| mls1_eval(&data, &weight, radius, p))
                    .collect::<Result<Vec<_>, _>>()?;
                ("mls", values)
            }
        };
        let metrics = error_metrics(targets, &values, &reference, &region)?;
        writeln!(out, "{name},{weight_name},{radius},{:.6e},{:.6e}",
            metrics.e2, metrics.einf
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// surface
// ---------------------------------------------------------------------------

fn radial_rms(mesh: &Tri3d) -> f64 {
    let sum: f64 = mesh
        .vertices()
        .iter()
        .map(|v| {
            let d = v.norm() - 1.0;
            d * d
        })
        .sum();
    (sum / mesh.vertices().len() as f64).sqrt()
}

fn run_surface(args: SurfaceArgs, out: &mut impl Write) -> Result<(), CliError> {
    if !(args.noise_sd >= 0.0 && args.noise_sd.is_finite()) {
        return Err(config_error(format!(
            "noise sd must be finite and non-negative, got {}",
            args.noise_sd
        )));
    }
    let mut mesh = surface_mesh(&args.mesh)?;
    if args.noise_sd > 0.0 {
        mesh = add_radial_noise(&mesh, args.noise_sd, args.seed);
    }
    let weight = io::parse_weight_spec(&args.weight)?;
    let radius = resolve_radius(&args.radius, mesh.diameter()?)?;
    let scheme = Scheme::new(weight);

    let mut describe = |level: u32, mesh: &Tri3d| -> Result<(), CliError> {
        if args.radial_stats {
            writeln!(
                out,
                "level {level}: {} vertices, {} faces, radial rms {:.6e}",
                mesh.vertices().len(),
                mesh.faces().len(),
                radial_rms(mesh)
            )?;
        } else {
            writeln!(
                out,
                "level {level}: {} vertices, {} faces",
                mesh.vertices().len(),
                mesh.faces().len()
            )?;
        }
        Ok(())
    };
    describe(0, &mesh)?;
    let mut r = radius;
    for level in 1..=args.iterations {
        mesh = surface_refine_step(&scheme, &mesh, r)?;
        r *= 0.5;
        describe(level, &mesh)?;
    }

    if let Some(path) = &args.out {
        io::save_mesh3(path, &mesh)?;
        writeln!(out, "wrote {}", path.display())?;
    }
    Ok(())
}
