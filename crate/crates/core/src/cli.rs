//! Command-line front end for the `heatlab` binary.
//!
//! Every command writes a CSV whose first line is
//! `# heatlab <version> config=<hash>`; the `verify-*` commands also write a
//! JSON header with the target, verdict and provenance. Exit status is 0 on
//! success, 2 for configuration errors, 3 for numeric failures (including a
//! FAIL verdict) and 4 for I/O errors.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::asymptotics::{
    exit_limit_experiment, kernel_limit_experiment, yaglom_experiment, LimitExperimentReport, LimitTarget,
};
use crate::cone::{cone_heat_kernel, cone_survival_series, ConeKernelSpec};
use crate::error::{AnalyticError, GeometryError, SimError, SpectralError};
use crate::geometry::{Ball, MulticoneDomain, Opening, Point, TruncatedCone, Violation, DEFAULT_TOLERANCE};
use crate::mc::{
    estimate_kernel_at, estimate_survival, estimate_u, estimate_w, simulate_paths_multi, SimConfig,
};
use crate::spectral::spectrum;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "heatlab", version, about = "Killed Brownian motion on cones and multicone domains")]
pub struct Cli {
    /// Worker threads for Monte Carlo runs; results do not depend on it.
    #[arg(long, global = true, env = "HEATLAB_WORKERS", default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Dirichlet eigenvalues of an opening.
    Spectrum(SpectrumArgs),
    /// Heat kernel of the vertex cone by its eigenfunction series.
    Kernel(KernelArgs),
    /// Survival probability in the vertex cone.
    Survival(SurvivalArgs),
    /// Monte Carlo killed paths observed on a time grid.
    Simulate(SimulateArgs),
    /// Estimates of the harmonic functions w and u.
    Harmonic(HarmonicArgs),
    /// Large-time kernel limit against its predicted value.
    VerifyKernel(VerifyKernelArgs),
    /// Large-time survival limit against its predicted value.
    VerifyExit(VerifyExitArgs),
    /// Yaglom limit of the rescaled survivors.
    VerifyYaglom(VerifyYaglomArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct OpeningArgs {
    /// Arc opening `start end` in radians.
    #[arg(long, num_args = 2, allow_negative_numbers = true, value_names = ["START", "END"])]
    pub arc: Option<Vec<f64>>,
    /// Cap opening of the given colatitude.
    #[arg(long, allow_negative_numbers = true)]
    pub cap: Option<f64>,
    /// Cap axis as `x,y,z` (default the z axis).
    #[arg(long, allow_hyphen_values = true)]
    pub axis: Option<String>,
    /// Vertex as comma-separated coordinates (default the origin).
    #[arg(long, allow_hyphen_values = true)]
    pub vertex: Option<String>,
    /// Take the opening and vertex from a branch of a domain file.
    #[arg(long)]
    pub domain: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub branch: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct Output {
    /// CSV output path (default standard output).
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub opening: OpeningArgs,
    /// Number of eigenvalues.
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct KernelArgs {
    #[command(flatten)]
    pub opening: OpeningArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, allow_hyphen_values = true)]
    pub y: String,
    /// `a,b,c` or `start:factor:count`.
    #[arg(long)]
    pub t_grid: String,
    /// Absolute tolerance on the series tail.
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct SurvivalArgs {
    #[command(flatten)]
    pub opening: OpeningArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long)]
    pub t_grid: String,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct SimArgs {
    /// JSON simulation config; the flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub paths: Option<u64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub dt_min: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Turn off the Brownian-bridge crossing correction.
    #[arg(long)]
    pub no_bridge: bool,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    #[arg(long)]
    pub stop_radius: Option<f64>,
    #[arg(long)]
    pub table_paths: Option<u64>,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long)]
    pub t_grid: String,
    /// Also estimate the kernel at this point.
    #[arg(long, allow_hyphen_values = true)]
    pub y: Option<String>,
    /// Write one row per path at the last time.
    #[arg(long)]
    #[serde(skip)]
    pub dump: Option<PathBuf>,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct HarmonicArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, default_value_t = 0)]
    pub branch: usize,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyOutput {
    /// JSON header path (default next to `--out`, else standard output).
    #[arg(long)]
    #[serde(skip)]
    pub json: Option<PathBuf>,
    /// Relative tolerance on the final deviation.
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
    /// Use this limit value instead of estimating it.
    #[arg(long)]
    pub target: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyKernelArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long, allow_hyphen_values = true)]
    pub y: String,
    #[arg(long)]
    pub t_grid: String,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub verify: VerifyOutput,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyExitArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long)]
    pub t_grid: String,
    #[command(flatten)]
    pub sim: SimArgs,
    #[command(flatten)]
    pub verify: VerifyOutput,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct VerifyYaglomArgs {
    #[arg(long)]
    pub domain: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    #[arg(long)]
    pub t: f64,
    /// Predicted branch frequencies, comma-separated.
    #[arg(long)]
    pub weights: Option<String>,
    #[command(flatten)]
    pub sim: SimArgs,
    /// JSON header path (default next to `--out`, else standard output).
    #[arg(long)]
    #[serde(skip)]
    pub json: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug)]
pub enum CliError {
    Config { message: String, violations: Vec<Violation> },
    Numeric(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Numeric(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn config(message: impl Into<String>) -> Self {
        CliError::Config {
            message: message.into(),
            violations: Vec::new(),
        }
    }

    /// One JSON object for standard error.
    pub fn to_json(&self) -> String {
        let v = match self {
            CliError::Config { message, violations } => json!({
                "error": "config",
                "message": message,
                "violations": violations.iter().map(|v| &v.message).collect::<Vec<_>>(),
            }),
            CliError::Numeric(m) => json!({"error": "numeric", "message": m}),
            CliError::Io(m) => json!({"error": "io", "message": m}),
        };
        v.to_string()
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { message, .. } | CliError::Numeric(message) | CliError::Io(message) => {
                f.write_str(message)
            }
        }
    }
}

fn geometry_error(e: GeometryError) -> CliError {
    match e {
        GeometryError::Invalid(v) => CliError::Config {
            message: GeometryError::Invalid(v.clone()).to_string(),
            violations: v,
        },
        other => CliError::config(other.to_string()),
    }
}

fn spectral_error(e: SpectralError) -> CliError {
    match e {
        SpectralError::Geometry(g) => geometry_error(g),
        SpectralError::NoModes | SpectralError::TooManyModes { .. } | SpectralError::ModeIndex { .. } => {
            CliError::config(e.to_string())
        }
        SpectralError::Bracket { .. } => CliError::Numeric(e.to_string()),
    }
}

impl From<AnalyticError> for CliError {
    fn from(e: AnalyticError) -> Self {
        match e {
            AnalyticError::Geometry(g) => geometry_error(g),
            AnalyticError::Spectral(s) => spectral_error(s),
            AnalyticError::Numeric(n) => CliError::Numeric(n.to_string()),
        }
    }
}

impl From<SpectralError> for CliError {
    fn from(e: SpectralError) -> Self {
        spectral_error(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Geometry(g) => geometry_error(g),
            SimError::Spectral(s) => spectral_error(s),
            SimError::Analytic(a) => a.into(),
            SimError::Numeric(n) => CliError::Numeric(n.to_string()),
            SimError::StepBudget { .. } | SimError::InsufficientSurvivors { .. } => {
                CliError::Numeric(e.to_string())
            }
            SimError::Config(_)
            | SimError::StartOutside
            | SimError::TooCloseToBoundary { .. }
            | SimError::Empty => CliError::config(e.to_string()),
        }
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct DomainFile {
    dimension: usize,
    #[serde(default)]
    core: Vec<BallFile>,
    branches: Vec<BranchFile>,
    #[serde(default)]
    tolerance: Option<f64>,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct BallFile {
    center: Vec<f64>,
    radius: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct BranchFile {
    vertex: Vec<f64>,
    opening: OpeningFile,
    truncation_radius: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct OpeningFile {
    #[serde(rename = "type")]
    kind: String,
    params: Vec<f64>,
}

fn point_of(coords: &[f64], dim: usize, what: &str) -> Result<Point, CliError> {
    if coords.len() != dim {
        return Err(CliError::config(format!(
            "{what} has {} coordinates, expected {dim}",
            coords.len()
        )));
    }
    let mut c = [0.0; 3];
    c[..dim].copy_from_slice(coords);
    Ok(Point(c))
}

/// Parses a domain description:
/// `{dimension, core: [{center, radius}], branches: [{vertex, opening:
/// {type: "arc" | "cap", params}, truncation_radius}]}`. Arc params are
/// `[start, end]`; cap params are `[colatitude]` or `[colatitude, ax, ay, az]`.
/// The domain is validated before it is returned.
pub fn parse_domain(text: &str) -> Result<MulticoneDomain, CliError> {
    let file: DomainFile =
        serde_json::from_str(text).map_err(|e| CliError::config(format!("malformed domain file: {e}")))?;
    let dim = file.dimension;
    if dim != 2 && dim != 3 {
        return Err(CliError::config(format!("dimension must be 2 or 3, got {dim}")));
    }
    let core = file
        .core
        .iter()
        .enumerate()
        .map(|(k, b)| Ok(Ball::new(point_of(&b.center, dim, &format!("core ball {k} center"))?, b.radius)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let branches = file
        .branches
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let vertex = point_of(&b.vertex, dim, &format!("branch {j} vertex"))?;
            let p = &b.opening.params;
            let opening = match (b.opening.kind.as_str(), p.len()) {
                ("arc", 2) => Opening::arc(p[0], p[1]),
                ("cap", 1) => Opening::polar_cap(p[0]),
                ("cap", 4) => Opening::cap(Point::new3(p[1], p[2], p[3]), p[0]),
                (kind, n) => {
                    return Err(CliError::config(format!(
                        "branch {j}: opening type {kind:?} with {n} params is not recognized"
                    )))
                }
            };
            Ok(TruncatedCone::new(vertex, opening, b.truncation_radius))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let domain = MulticoneDomain {
        dimension: dim,
        core,
        branches,
        tolerance: file.tolerance.unwrap_or(DEFAULT_TOLERANCE),
    };
    let violations = domain.validate();
    if !violations.is_empty() {
        return Err(geometry_error(GeometryError::Invalid(violations)));
    }
    Ok(domain)
}

pub fn load_domain(path: &Path) -> Result<MulticoneDomain, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("domain file not found: {}", path.display())));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_domain(&text)
}

/// Comma-separated coordinates.
pub fn parse_point(s: &str, dim: usize) -> Result<Point, CliError> {
    let coords = parse_list(s, "point")?;
    point_of(&coords, dim, &format!("point {s:?}"))
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|c| {
            c.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::config(format!("bad {what} entry {c:?} in {s:?}")))
        })
        .collect()
}

/// `a,b,c` or the geometric shorthand `start:factor:count`.
pub fn parse_t_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let grid = if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || CliError::config(format!("bad geometric grid {s:?}, expected start:factor:count"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let factor: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        (0..count).map(|i| start * factor.powi(i as i32)).collect()
    } else {
        parse_list(s, "time")?
    };
    if grid.is_empty() || grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(CliError::config(format!("time grid {s:?} must hold positive finite times")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::config(format!("time grid {s:?} must be strictly increasing")));
    }
    Ok(grid)
}

/// Rounds to 12 significant digits; plain notation between `1e-4` and `1e15`.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().unwrap_or(x);
    let a = rounded.abs();
    if (1e-4..1e15).contains(&a) {
        rounded.to_string()
    } else {
        format!("{rounded:e}")
    }
}

fn config_hash(command: &Command, domain: Option<&MulticoneDomain>) -> String {
    let payload = json!({"command": command, "domain": domain});
    let digest = Sha256::digest(payload.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

struct Csv {
    text: String,
}

impl Csv {
    fn new(hash: &str, columns: &[&str]) -> Self {
        let mut text = format!("# heatlab {VERSION} config={hash}\n");
        text.push_str(&columns.join(","));
        text.push('\n');
        Self { text }
    }

    fn comment(&mut self, line: &str) {
        let _ = writeln!(self.text, "# {line}");
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

fn num(x: f64) -> String {
    format_number(x)
}

fn write_artifact(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(format!("cannot write to standard output: {e}")))
        }
    }
}

fn json_path(explicit: Option<&PathBuf>, out: Option<&PathBuf>) -> Option<PathBuf> {
    explicit.cloned().or_else(|| out.map(|o| o.with_extension("json")))
}

fn sim_config(args: &SimArgs, workers: usize) -> Result<SimConfig, CliError> {
    let mut cfg = match &args.config {
        Some(p) => {
            if !p.exists() {
                return Err(CliError::Io(format!("config file not found: {}", p.display())));
            }
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::Io(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("malformed config file: {e}")))?
        }
        None => SimConfig::default(),
    };
    if let Some(v) = args.paths {
        cfg.paths = v;
    }
    if let Some(v) = args.dt {
        cfg.dt = v;
    }
    if let Some(v) = args.dt_min {
        cfg.dt_min = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if args.no_bridge {
        cfg.bridge = false;
    }
    if args.bandwidth.is_some() {
        cfg.bandwidth = args.bandwidth;
    }
    if args.stop_radius.is_some() {
        cfg.stop_radius = args.stop_radius;
    }
    if let Some(v) = args.table_paths {
        cfg.table_paths = v;
    }
    cfg.workers = workers;
    cfg.validate()?;
    Ok(cfg)
}

fn cone_spec(args: &OpeningArgs, tol: f64) -> Result<(ConeKernelSpec, Option<MulticoneDomain>), CliError> {
    let given = [args.arc.is_some(), args.cap.is_some(), args.domain.is_some()]
        .iter()
        .filter(|b| **b)
        .count();
    if given != 1 {
        return Err(CliError::config("give exactly one of --arc, --cap or --domain"));
    }
    let (opening, vertex, domain) = if let Some(path) = &args.domain {
        let d = load_domain(path)?;
        let b = *d
            .branches
            .get(args.branch)
            .ok_or_else(|| CliError::config(format!("branch {} out of range", args.branch)))?;
        (b.opening, b.vertex, Some(d))
    } else {
        let opening = if let Some(a) = &args.arc {
            Opening::arc(a[0], a[1])
        } else {
            let c = args.cap.unwrap_or_default();
            match &args.axis {
                Some(s) => Opening::cap(parse_point(s, 3)?, c),
                None => Opening::polar_cap(c),
            }
        };
        let problems = opening.violations();
        if !problems.is_empty() {
            return Err(CliError::config(problems.join("; ")));
        }
        let vertex = match &args.vertex {
            Some(s) => parse_point(s, opening.dimension())?,
            None => Point::ORIGIN,
        };
        (opening, vertex, None)
    };
    Ok((ConeKernelSpec::for_opening(&opening, vertex, tol)?, domain))
}

fn opening_of(args: &OpeningArgs) -> Result<Opening, CliError> {
    if let Some(path) = &args.domain {
        let d = load_domain(path)?;
        return d
            .branches
            .get(args.branch)
            .map(|b| b.opening)
            .ok_or_else(|| CliError::config(format!("branch {} out of range", args.branch)));
    }
    match (&args.arc, args.cap) {
        (Some(a), None) => Ok(Opening::arc(a[0], a[1])),
        (None, Some(c)) => Ok(match &args.axis {
            Some(s) => Opening::cap(parse_point(s, 3)?, c),
            None => Opening::polar_cap(c),
        }),
        _ => Err(CliError::config("give exactly one of --arc, --cap or --domain")),
    }
}

/// Runs one command; the returned code is the process exit status.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    match &cli.command {
        Command::Spectrum(a) => {
            let opening = opening_of(&a.opening)?;
            let s = spectrum(&opening, a.k)?;
            let mut csv = Csv::new(&config_hash(&cli.command, None), &["k", "lambda", "alpha"]);
            for i in 0..s.len() {
                let lambda = s.eigenvalues[i];
                csv.row(&[(i + 1).to_string(), num(lambda), num(s.characters[i])]);
            }
            write_artifact(a.output.out.as_deref(), &csv.text)?;
            Ok(0)
        }
        Command::Kernel(a) => {
            let (spec, domain) = cone_spec(&a.opening, a.tol)?;
            let dim = spec.spectral.dimension;
            let x = parse_point(&a.x, dim)?;
            let y = parse_point(&a.y, dim)?;
            let grid = parse_t_grid(&a.t_grid)?;
            let mut csv = Csv::new(
                &config_hash(&cli.command, domain.as_ref()),
                &["t", "value", "error_bound", "terms"],
            );
            for t in grid {
                let p = cone_heat_kernel(&spec, t, &x, &y)?;
                csv.row(&[num(t), num(p.value), num(p.error_bound), p.terms.to_string()]);
            }
            write_artifact(a.output.out.as_deref(), &csv.text)?;
            Ok(0)
        }
        Command::Survival(a) => {
            let (spec, domain) = cone_spec(&a.opening, a.tol)?;
            let x = parse_point(&a.x, spec.spectral.dimension)?;
            let grid = parse_t_grid(&a.t_grid)?;
            let mut csv = Csv::new(
                &config_hash(&cli.command, domain.as_ref()),
                &["t", "value", "error_bound", "terms"],
            );
            for t in grid {
                let p = cone_survival_series(&spec, t, &x)?;
                csv.row(&[num(t), num(p.value), num(p.error_bound), p.terms.to_string()]);
            }
            write_artifact(a.output.out.as_deref(), &csv.text)?;
            Ok(0)
        }
        Command::Simulate(a) => {
            let domain = load_domain(&a.domain)?;
            let x = parse_point(&a.x, domain.dimension)?;
            let y = a.y.as_deref().map(|s| parse_point(s, domain.dimension)).transpose()?;
            let grid = parse_t_grid(&a.t_grid)?;
            let cfg = sim_config(&a.sim, cli.workers)?;
            let ens = simulate_paths_multi(&domain, x, &grid, &cfg)?;
            let mut columns = vec![
                "t".to_string(),
                "paths".into(),
                "survivors".into(),
                "survival".into(),
                "survival_se".into(),
                "core".into(),
            ];
            columns.extend((0..domain.branches.len()).map(|j| format!("branch{j}")));
            if y.is_some() {
                columns.extend(["kernel".into(), "kernel_se".into()]);
            }
            let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
            let mut csv = Csv::new(&config_hash(&cli.command, Some(&domain)), &cols);
            for i in 0..grid.len() {
                let view = ens.horizon(i);
                let summary = ens.summary(i);
                let s = estimate_survival(&view)?;
                let mut cells = vec![
                    num(view.t),
                    view.paths.to_string(),
                    summary.survivors.to_string(),
                    num(s.estimate),
                    num(s.std_error),
                    summary.core_count.to_string(),
                ];
                cells.extend(summary.branch_counts.iter().map(u64::to_string));
                if let Some(y) = &y {
                    let k = estimate_kernel_at(&view, y, cfg.bandwidth)?;
                    cells.extend([num(k.estimate), num(k.std_error)]);
                }
                csv.row(&cells);
            }
            if let Some(path) = &a.dump {
                let mut buf = format!(
                    "# heatlab {VERSION} config={}\n",
                    config_hash(&cli.command, Some(&domain))
                )
                .into_bytes();
                ens.write_csv(grid.len() - 1, &mut buf)
                    .map_err(|e| CliError::Io(e.to_string()))?;
                std::fs::write(path, buf).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
            }
            write_artifact(a.output.out.as_deref(), &csv.text)?;
            Ok(0)
        }
        Command::Harmonic(a) => {
            let domain = load_domain(&a.domain)?;
            let x = parse_point(&a.x, domain.dimension)?;
            let cfg = sim_config(&a.sim, cli.workers)?;
            let cone = *domain
                .branches
                .get(a.branch)
                .ok_or_else(|| CliError::config(format!("branch {} out of range", a.branch)))?;
            let mut csv = Csv::new(
                &config_hash(&cli.command, Some(&domain)),
                &["quantity", "branch", "estimate", "std_error", "paths", "stop_radius"],
            );
            if cone.contains(&x) {
                let spec = spectrum(&cone.opening, 1)?;
                let w = estimate_w(&cone, &spec, &x, &cfg)?;
                csv.row(&[
                    "w".into(),
                    a.branch.to_string(),
                    num(w.estimate),
                    num(w.std_error),
                    w.paths.to_string(),
                    String::new(),
                ]);
            }
            let single = domain.core.is_empty() && domain.branches.len() == 1;
            if !single {
                let mut ucfg = cfg.clone();
                if ucfg.stop_radius.is_none() {
                    ucfg.stop_radius = Some(10.0 * domain.max_truncation_radius());
                }
                let u = estimate_u(&domain, a.branch, &x, &ucfg)?;
                if u.truncation_suspect {
                    csv.comment("stop radius below ten truncation radii; u is biased low");
                }
                csv.row(&[
                    "u".into(),
                    a.branch.to_string(),
                    num(u.ci.estimate),
                    num(u.ci.std_error),
                    u.ci.paths.to_string(),
                    num(u.stop_radius),
                ]);
            }
            write_artifact(a.output.out.as_deref(), &csv.text)?;
            Ok(0)
        }
        Command::VerifyKernel(a) => {
            let domain = load_domain(&a.domain)?;
            let x = parse_point(&a.x, domain.dimension)?;
            let y = parse_point(&a.y, domain.dimension)?;
            let grid = parse_t_grid(&a.t_grid)?;
            let cfg = sim_config(&a.sim, cli.workers)?;
            let target = a.verify.target.map(|v| LimitTarget::known(v, "given"));
            let report = kernel_limit_experiment(&domain, &x, &y, &grid, &cfg, target, a.verify.tolerance)?;
            emit_limit_report(&cli.command, &domain, &report, &a.output, &a.verify)
        }
        Command::VerifyExit(a) => {
            let domain = load_domain(&a.domain)?;
            let x = parse_point(&a.x, domain.dimension)?;
            let grid = parse_t_grid(&a.t_grid)?;
            let cfg = sim_config(&a.sim, cli.workers)?;
            let target = a.verify.target.map(|v| LimitTarget::known(v, "given"));
            let report = exit_limit_experiment(&domain, &x, &grid, &cfg, target, a.verify.tolerance)?;
            emit_limit_report(&cli.command, &domain, &report, &a.output, &a.verify)
        }
        Command::VerifyYaglom(a) => {
            let domain = load_domain(&a.domain)?;
            let x = parse_point(&a.x, domain.dimension)?;
            let cfg = sim_config(&a.sim, cli.workers)?;
            let weights = a.weights.as_deref().map(|s| parse_list(s, "weight")).transpose()?;
            let report = yaglom_experiment(&domain, &x, a.t, &cfg, weights)?;
            let hash = config_hash(&cli.command, Some(&domain));
            let mut csv = Csv::new(
                &hash,
                &[
                    "branch",
                    "maximal",
                    "alpha",
                    "count",
                    "frequency",
                    "predicted",
                    "sigma",
                    "frequency_ok",
                    "radial_ks",
                    "angular_ks",
                    "ks_critical",
                    "radial_ok",
                    "angular_ok",
                ],
            );
            let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
            for b in &report.branches {
                csv.row(&[
                    b.branch.to_string(),
                    b.maximal.to_string(),
                    num(b.alpha),
                    b.count.to_string(),
                    num(b.frequency),
                    num(b.predicted),
                    num(b.sigma),
                    b.frequency_ok.to_string(),
                    opt(b.radial_ks),
                    opt(b.angular_ks),
                    opt(b.ks_critical),
                    b.radial_ok.to_string(),
                    b.angular_ok.to_string(),
                ]);
            }
            let header = json!({
                "tool": "heatlab",
                "version": VERSION,
                "config": hash,
                "verdict": report.verdict,
                "report": report,
            });
            emit_with_json(&csv.text, &header, a.output.out.as_ref(), a.json.as_ref())?;
            Ok(if report.verdict.passed() { 0 } else { 3 })
        }
    }
}

fn emit_limit_report(
    command: &Command,
    domain: &MulticoneDomain,
    report: &LimitExperimentReport,
    output: &Output,
    verify: &VerifyOutput,
) -> Result<i32, CliError> {
    let hash = config_hash(command, Some(domain));
    let mut csv = Csv::new(&hash, &LimitExperimentReport::CSV_COLUMNS);
    for r in report.csv_rows() {
        csv.row(&r.iter().map(|v| num(*v)).collect::<Vec<_>>());
    }
    let header = json!({
        "tool": "heatlab",
        "version": VERSION,
        "config": hash,
        "verdict": report.verdict,
        "report": report,
    });
    emit_with_json(&csv.text, &header, output.out.as_ref(), verify.json.as_ref())?;
    Ok(if report.verdict.passed() { 0 } else { 3 })
}

fn emit_with_json(
    csv: &str,
    header: &serde_json::Value,
    out: Option<&PathBuf>,
    json: Option<&PathBuf>,
) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(header).map_err(|e| CliError::Io(e.to_string()))? + "\n";
    write_artifact(out.map(PathBuf::as_path), csv)?;
    match json_path(json, out) {
        Some(p) => write_artifact(Some(&p), &text),
        None => write_artifact(None, &text),
    }
}

/// Parses `argv`, runs the command and reports errors on standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}
