//! Large-time limit experiments.
//!
//! Each experiment renormalizes a family of estimates over a grid of times
//! and compares them with a limit value built from the analytic cone
//! quantities and Monte Carlo estimates of the harmonic functions `u_l`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::cone::{
    cone_heat_kernel, cone_survival_series, gamma_v, minimal_harmonic_v, yaglom_angular_cdf,
    yaglom_radial_cdf, ConeKernelSpec,
};
use crate::error::{SimError, SpectralError};
use crate::geometry::{Location, MulticoneDomain, Point};
use crate::mc::{
    estimate_kernel_at, estimate_survival, estimate_u, estimate_w, simulate_paths,
    simulate_paths_multi, EstimateCI, SimConfig,
};
use crate::spectral::{spectrum, SpectralData};

/// Two characters closer than this are treated as equal.
pub const CHARACTER_TIE: f64 = 1e-10;
/// Two-sided 95% normal quantile used for report intervals.
pub const Z95: f64 = 1.959963984540054;
/// Asymptotic 1% critical value of the scaled Kolmogorov–Smirnov statistic.
pub const KS_CRITICAL_1PCT: f64 = 1.63;
pub const DESK_MAX_PATHS: u64 = 100_000_000;
pub const DESK_MAX_TIME: f64 = 1024.0;
pub const MIN_SURVIVORS: usize = 10_000;

/// Ground-state spectral data of every branch opening.
pub fn branch_spectra(domain: &MulticoneDomain) -> Result<Vec<SpectralData>, SpectralError> {
    domain
        .branches
        .iter()
        .map(|b| spectrum(&b.opening, 1))
        .collect()
}

/// `α = min_j α_j` and the indices attaining it.
pub fn maximal_indices(alphas: &[f64]) -> (Vec<usize>, f64) {
    let alpha = alphas.iter().copied().fold(f64::INFINITY, f64::min);
    let set = alphas
        .iter()
        .enumerate()
        .filter(|(_, a)| (**a - alpha).abs() <= CHARACTER_TIE)
        .map(|(j, _)| j)
        .collect();
    (set, alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// Closed form, no sampling error.
    Known,
    /// Built from Monte Carlo estimates of `u_l`.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitTarget {
    pub value: f64,
    pub std_error: f64,
    pub kind: TargetKind,
    pub description: String,
}

impl LimitTarget {
    pub fn known(value: f64, description: &str) -> Self {
        Self {
            value,
            std_error: 0.0,
            kind: TargetKind::Known,
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitRow {
    pub t: f64,
    pub estimate: f64,
    pub std_error: f64,
    /// The estimate times the power of `t` that makes it converge.
    pub renormalized: f64,
    pub renormalized_std_error: f64,
    /// `|renormalized / target − 1|`.
    pub deviation: f64,
    /// 95% half-width of the deviation, data and target errors in quadrature.
    pub deviation_ci: f64,
}

impl LimitRow {
    /// Row for an estimate at `t` renormalized by `t^exponent`.
    pub fn new(t: f64, est: f64, se: f64, exponent: f64, target: &LimitTarget) -> Self {
        let scale = t.powf(exponent);
        let renormalized = est * scale;
        let rse = se * scale;
        let tv = target.value;
        let ratio_se = ((rse / tv).powi(2) + (renormalized * target.std_error / (tv * tv)).powi(2)).sqrt();
        LimitRow {
            t,
            estimate: est,
            std_error: se,
            renormalized,
            renormalized_std_error: rse,
            deviation: (renormalized / tv - 1.0).abs(),
            deviation_ci: Z95 * ratio_se,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
}

impl Verdict {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub domain_hash: String,
    pub x: Point,
    pub y: Option<Point>,
    pub config: Option<SimConfig>,
    /// Hash of the simulation inputs, when a simulation was run.
    pub ensemble_hash: Option<String>,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitExperimentReport {
    pub experiment: String,
    pub alpha: f64,
    pub maximal: Vec<usize>,
    /// Power `p` in the renormalization `t^p`.
    pub exponent: f64,
    pub target: LimitTarget,
    pub tolerance: f64,
    pub rows: Vec<LimitRow>,
    pub final_within_tolerance: bool,
    pub trend_ok: bool,
    pub verdict: Verdict,
    pub out_of_desk_scale: bool,
    pub provenance: Provenance,
}

impl LimitExperimentReport {
    pub fn final_deviation(&self) -> f64 {
        self.rows.last().map_or(f64::NAN, |r| r.deviation)
    }

    pub const CSV_COLUMNS: [&'static str; 8] = [
        "t",
        "estimate",
        "std_error",
        "renormalized",
        "renormalized_std_error",
        "target",
        "deviation",
        "deviation_ci",
    ];

    pub fn csv_rows(&self) -> Vec<[f64; 8]> {
        self.rows
            .iter()
            .map(|r| {
                [
                    r.t,
                    r.estimate,
                    r.std_error,
                    r.renormalized,
                    r.renormalized_std_error,
                    self.target.value,
                    r.deviation,
                    r.deviation_ci,
                ]
            })
            .collect()
    }
}

fn check_grid(grid: &[f64]) -> Result<(), SimError> {
    if grid.is_empty() {
        return Err(SimError::Config("the time grid is empty".into()));
    }
    if grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(SimError::Config("grid times must be positive and finite".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimError::Config("the time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Final deviation within `tol`, and over the last three points each
/// deviation exceeds its predecessor by no more than the two intervals.
pub fn trend_verdict(rows: &[LimitRow], tol: f64) -> (bool, bool) {
    let within = rows.last().is_some_and(|r| r.deviation <= tol);
    let tail = &rows[rows.len().saturating_sub(3)..];
    let trend = tail
        .windows(2)
        .all(|w| w[1].deviation <= w[0].deviation + w[0].deviation_ci + w[1].deviation_ci);
    (within, trend)
}

fn assemble(
    experiment: &str,
    alpha: f64,
    maximal: Vec<usize>,
    exponent: f64,
    target: LimitTarget,
    tolerance: f64,
    rows: Vec<LimitRow>,
    out_of_desk_scale: bool,
    provenance: Provenance,
) -> LimitExperimentReport {
    let (within, trend) = trend_verdict(&rows, tolerance);
    LimitExperimentReport {
        experiment: experiment.into(),
        alpha,
        maximal,
        exponent,
        target,
        tolerance,
        rows,
        final_within_tolerance: within,
        trend_ok: trend,
        verdict: Verdict::from_bool(within && trend),
        out_of_desk_scale,
        provenance,
    }
}

/// SHA-256 of the domain's JSON form.
pub fn domain_hash(domain: &MulticoneDomain) -> String {
    use sha2::{Digest, Sha256};
    let json = serde_json::to_string(domain).unwrap_or_default();
    Sha256::digest(json.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn provenance(domain: &MulticoneDomain, x: Point, y: Option<Point>, cfg: Option<&SimConfig>, ensemble: Option<String>) -> Provenance {
    Provenance {
        domain_hash: domain_hash(domain),
        x,
        y,
        config: cfg.cloned(),
        ensemble_hash: ensemble,
        version: env!("CARGO_PKG_VERSION").into(),
    }
}

fn desk_scale_exceeded(grid: &[f64], cfg: &SimConfig) -> bool {
    cfg.paths > DESK_MAX_PATHS || grid.iter().any(|&t| t > DESK_MAX_TIME)
}

fn check_domain(domain: &MulticoneDomain) -> Result<(), SimError> {
    let violations = domain.validate();
    if violations.is_empty() {
        Ok(())
    } else {
        Err(crate::error::GeometryError::Invalid(violations).into())
    }
}

/// Estimate of `u_l` at `x`. A domain made of a single bare truncated cone
/// has `u_0 = w`, which is estimated directly; otherwise the stop radius
/// defaults to ten times the largest truncation radius.
pub fn estimate_harmonic(domain: &MulticoneDomain, l: usize, x: &Point, cfg: &SimConfig) -> Result<EstimateCI, SimError> {
    if domain.core.is_empty() && domain.branches.len() == 1 && l == 0 {
        let cone = domain.branches[0];
        let spec = spectrum(&cone.opening, 1)?;
        return estimate_w(&cone, &spec, x, cfg);
    }
    let mut cfg = cfg.clone();
    if cfg.stop_radius.is_none() {
        cfg.stop_radius = Some(10.0 * domain.max_truncation_radius());
    }
    Ok(estimate_u(domain, l, x, &cfg)?.ci)
}

/// Target `Σ_{l∈M} u_l(x)u_l(y) / (2^α Γ(1+α))` from estimates of `u_l`.
pub fn kernel_target(domain: &MulticoneDomain, x: &Point, y: &Point, cfg: &SimConfig) -> Result<LimitTarget, SimError> {
    let spectra = branch_spectra(domain)?;
    let alphas: Vec<f64> = spectra.iter().map(SpectralData::alpha).collect();
    let (maximal, alpha) = maximal_indices(&alphas);
    let c = 1.0 / (alpha * 2f64.ln() + ln_gamma(1.0 + alpha)).exp();
    let (mut value, mut var) = (0.0, 0.0);
    for &l in &maximal {
        let ux = estimate_harmonic(domain, l, x, cfg)?;
        let uy = if x == y {
            ux.clone()
        } else {
            estimate_harmonic(domain, l, y, &SimConfig {
                seed: cfg.seed.wrapping_add(1),
                ..cfg.clone()
            })?
        };
        value += c * ux.estimate * uy.estimate;
        if x == y {
            var += (c * 2.0 * ux.estimate * ux.std_error).powi(2);
        } else {
            var += (c * uy.estimate * ux.std_error).powi(2) + (c * ux.estimate * uy.std_error).powi(2);
        }
    }
    Ok(LimitTarget {
        value,
        std_error: var.sqrt(),
        kind: TargetKind::Estimated,
        description: "sum over maximal branches of u(x)u(y)/(2^a Gamma(1+a))".into(),
    })
}

/// Target `Σ_{l∈M} γ_{V_l} u_l(x)` from estimates of `u_l`.
pub fn exit_target(domain: &MulticoneDomain, x: &Point, cfg: &SimConfig) -> Result<LimitTarget, SimError> {
    let spectra = branch_spectra(domain)?;
    let alphas: Vec<f64> = spectra.iter().map(SpectralData::alpha).collect();
    let (maximal, _) = maximal_indices(&alphas);
    let (mut value, mut var) = (0.0, 0.0);
    for &l in &maximal {
        let g = gamma_v(&spectra[l]);
        let u = estimate_harmonic(domain, l, x, cfg)?;
        value += g * u.estimate;
        var += (g * u.std_error).powi(2);
    }
    Ok(LimitTarget {
        value,
        std_error: var.sqrt(),
        kind: TargetKind::Estimated,
        description: "sum over maximal branches of gamma_V u(x)".into(),
    })
}

/// `t^{1+α} p̂(t, x, y)` over the grid, from one multi-horizon simulation.
/// Without `target` the limit is estimated with [`kernel_target`].
pub fn kernel_limit_experiment(
    domain: &MulticoneDomain,
    x: &Point,
    y: &Point,
    grid: &[f64],
    cfg: &SimConfig,
    target: Option<LimitTarget>,
    tolerance: f64,
) -> Result<LimitExperimentReport, SimError> {
    check_grid(grid)?;
    check_domain(domain)?;
    cfg.validate()?;
    let spectra = branch_spectra(domain)?;
    let alphas: Vec<f64> = spectra.iter().map(SpectralData::alpha).collect();
    let (maximal, alpha) = maximal_indices(&alphas);
    let target = match target {
        Some(t) => t,
        None => kernel_target(domain, x, y, cfg)?,
    };
    let ens = simulate_paths_multi(domain, *x, grid, cfg)?;
    let exponent = 1.0 + alpha;
    let mut rows = Vec::with_capacity(grid.len());
    for i in 0..grid.len() {
        let k = estimate_kernel_at(&ens.horizon(i), y, cfg.bandwidth)?;
        rows.push(LimitRow::new(grid[i], k.estimate, k.std_error, exponent, &target));
    }
    Ok(assemble(
        "kernel",
        alpha,
        maximal,
        exponent,
        target,
        tolerance,
        rows,
        desk_scale_exceeded(grid, cfg),
        provenance(domain, *x, Some(*y), Some(cfg), Some(ens.config_hash())),
    ))
}

/// `t^{κ/2} P̂_x(T > t)` over the grid, from one multi-horizon simulation.
pub fn exit_limit_experiment(
    domain: &MulticoneDomain,
    x: &Point,
    grid: &[f64],
    cfg: &SimConfig,
    target: Option<LimitTarget>,
    tolerance: f64,
) -> Result<LimitExperimentReport, SimError> {
    check_grid(grid)?;
    check_domain(domain)?;
    cfg.validate()?;
    let spectra = branch_spectra(domain)?;
    let alphas: Vec<f64> = spectra.iter().map(SpectralData::alpha).collect();
    let (maximal, alpha) = maximal_indices(&alphas);
    let kappa = spectra[maximal[0]].kappa;
    let target = match target {
        Some(t) => t,
        None => exit_target(domain, x, cfg)?,
    };
    let ens = simulate_paths_multi(domain, *x, grid, cfg)?;
    let exponent = kappa / 2.0;
    let rows = (0..grid.len())
        .map(|i| {
            let s = estimate_survival(&ens.horizon(i))?;
            Ok(LimitRow::new(grid[i], s.estimate, s.std_error, exponent, &target))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(assemble(
        "exit",
        alpha,
        maximal,
        exponent,
        target,
        tolerance,
        rows,
        desk_scale_exceeded(grid, cfg),
        provenance(domain, *x, None, Some(cfg), Some(ens.config_hash())),
    ))
}

fn vertex_domain(spec: &ConeKernelSpec) -> MulticoneDomain {
    MulticoneDomain {
        dimension: spec.spectral.dimension,
        core: Vec::new(),
        branches: Vec::new(),
        tolerance: crate::geometry::DEFAULT_TOLERANCE,
    }
}

/// `t^{1+α} p^V(t, x, y)` against `v(x)v(y)/(2^α Γ(1+α))`, no sampling.
/// Points are taken relative to the vertex of `spec`.
pub fn vertex_kernel_limit(
    spec: &ConeKernelSpec,
    x: &Point,
    y: &Point,
    grid: &[f64],
    tolerance: f64,
) -> Result<LimitExperimentReport, SimError> {
    check_grid(grid)?;
    let s = &spec.spectral;
    let alpha = s.alpha();
    let vx = minimal_harmonic_v(s, &(*x - spec.vertex))?;
    let vy = minimal_harmonic_v(s, &(*y - spec.vertex))?;
    let target = LimitTarget::known(
        vx * vy / (alpha * 2f64.ln() + ln_gamma(1.0 + alpha)).exp(),
        "v(x)v(y)/(2^a Gamma(1+a))",
    );
    let exponent = 1.0 + alpha;
    let rows = grid
        .iter()
        .map(|&t| {
            let p = cone_heat_kernel(spec, t, x, y)?;
            Ok(LimitRow::new(t, p.value, p.error_bound, exponent, &target))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(assemble(
        "vertex-kernel",
        alpha,
        vec![0],
        exponent,
        target,
        tolerance,
        rows,
        false,
        provenance(&vertex_domain(spec), *x, Some(*y), None, None),
    ))
}

/// `t^{κ/2} P_x(T^V > t)` against `γ_V v(x)`, no sampling.
pub fn vertex_exit_limit(
    spec: &ConeKernelSpec,
    x: &Point,
    grid: &[f64],
    tolerance: f64,
) -> Result<LimitExperimentReport, SimError> {
    check_grid(grid)?;
    let s = &spec.spectral;
    let v = minimal_harmonic_v(s, &(*x - spec.vertex))?;
    let target = LimitTarget::known(gamma_v(s) * v, "gamma_V v(x)");
    let exponent = s.kappa / 2.0;
    let rows = grid
        .iter()
        .map(|&t| {
            let p = cone_survival_series(spec, t, x)?;
            Ok(LimitRow::new(t, p.value, p.error_bound, exponent, &target))
        })
        .collect::<Result<Vec<_>, SimError>>()?;
    Ok(assemble(
        "vertex-exit",
        s.alpha(),
        vec![0],
        exponent,
        target,
        tolerance,
        rows,
        false,
        provenance(&vertex_domain(spec), *x, None, None, None),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Fitted `q` in `estimate ≈ C t^{−q}`.
    pub exponent: f64,
    pub std_error: f64,
}

/// Weighted least squares of `ln estimate` on `ln t`, weights from the
/// delta-method variance `(se/estimate)²`.
pub fn fit_decay_exponent(rows: &[LimitRow]) -> Result<DecayFit, SimError> {
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.estimate > 0.0)
        .map(|r| {
            let rel = r.std_error / r.estimate;
            let w = if rel > 0.0 { 1.0 / (rel * rel) } else { 1.0 };
            (r.t.ln(), r.estimate.ln(), w)
        })
        .collect();
    if pts.len() < 2 {
        return Err(SimError::Config("a decay fit needs two positive estimates".into()));
    }
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        exponent: -slope,
        std_error: (1.0 / sxx).sqrt(),
    })
}

/// Largest gap between an empirical CDF and `cdf`.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let f = cdf(s);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchYaglom {
    pub branch: usize,
    pub maximal: bool,
    pub alpha: f64,
    pub count: u64,
    pub frequency: f64,
    pub predicted: f64,
    /// `√(p(1−p)/S)` with `p` the predicted frequency, or the observed one
    /// for non-maximal branches.
    pub sigma: f64,
    pub frequency_ok: bool,
    pub radial_ks: Option<f64>,
    pub angular_ks: Option<f64>,
    /// `1.63/√count`.
    pub ks_critical: Option<f64>,
    pub radial_ok: bool,
    pub angular_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YaglomReport {
    pub t: f64,
    pub paths: u64,
    pub survivors: u64,
    pub core_survivors: u64,
    pub alpha: f64,
    pub maximal: Vec<usize>,
    /// Predicted branch weights: given, symmetric, or from estimated `u_l`.
    pub weights_source: String,
    pub branches: Vec<BranchYaglom>,
    pub verdict: Verdict,
    pub out_of_desk_scale: bool,
    pub provenance: Provenance,
}

impl YaglomReport {
    pub fn branch(&self, j: usize) -> &BranchYaglom {
        &self.branches[j]
    }
}

/// Survivors at time `t` rescaled about their branch vertex, compared with
/// the Yaglom limit: branch frequencies against `γ_j u_j(x)/Σ γ_k u_k(x)`
/// over maximal branches, and KS distances of the radial and angular
/// marginals in every maximal branch. Frequencies are taken among survivors
/// located in branches. `weights` overrides the predicted frequencies; when
/// absent they are estimated unless there is a single maximal branch.
pub fn yaglom_experiment(
    domain: &MulticoneDomain,
    x: &Point,
    t: f64,
    cfg: &SimConfig,
    weights: Option<Vec<f64>>,
) -> Result<YaglomReport, SimError> {
    check_grid(&[t])?;
    check_domain(domain)?;
    cfg.validate()?;
    let spectra = branch_spectra(domain)?;
    let alphas: Vec<f64> = spectra.iter().map(SpectralData::alpha).collect();
    let (maximal, alpha) = maximal_indices(&alphas);
    let nb = domain.branches.len();

    let (predicted, weights_source) = match weights {
        Some(w) => {
            if w.len() != nb || w.iter().any(|p| !(*p >= 0.0)) {
                return Err(SimError::Config(format!(
                    "expected {nb} nonnegative branch weights, got {w:?}"
                )));
            }
            (normalized(w), "given".to_string())
        }
        None if maximal.len() == 1 => {
            let mut w = vec![0.0; nb];
            w[maximal[0]] = 1.0;
            (w, "single-maximal".to_string())
        }
        None => {
            let mut w = vec![0.0; nb];
            for &l in &maximal {
                let u = estimate_harmonic(domain, l, x, cfg)?;
                w[l] = gamma_v(&spectra[l]) * u.estimate.max(0.0);
            }
            (normalized(w), "estimated".to_string())
        }
    };

    let ens = simulate_paths(domain, *x, t, cfg)?;
    let view = ens.last();
    let mut radii: Vec<Vec<f64>> = vec![Vec::new(); nb];
    let mut coords: Vec<Vec<f64>> = vec![Vec::new(); nb];
    let mut core = 0u64;
    let scale = 1.0 / t.sqrt();
    for s in view.survivors {
        match s.location {
            Location::Branch(j) => {
                let b = &domain.branches[j];
                let w = s.position - b.vertex;
                radii[j].push(w.norm() * scale);
                if let Some(c) = b.opening.coordinate(&w, domain.tolerance) {
                    coords[j].push(c);
                }
            }
            Location::Core => core += 1,
            Location::Outside => {}
        }
    }
    let in_branches: usize = radii.iter().map(Vec::len).sum();
    if in_branches < MIN_SURVIVORS {
        return Err(SimError::InsufficientSurvivors {
            got: in_branches,
            required: MIN_SURVIVORS,
        });
    }
    let total = in_branches as f64;
    let mut branches = Vec::with_capacity(nb);
    for j in 0..nb {
        let count = radii[j].len();
        let f = count as f64 / total;
        let is_max = maximal.contains(&j);
        let (sigma, frequency_ok) = if is_max {
            let p = predicted[j];
            let sigma = (p * (1.0 - p) / total).sqrt();
            (sigma, (f - p).abs() <= 3.0 * sigma)
        } else {
            let sigma = (f * (1.0 - f) / total).sqrt();
            (sigma, f <= 2.0 * 3.0 * sigma)
        };
        let (mut radial_ks, mut angular_ks, mut ks_critical) = (None, None, None);
        let (mut radial_ok, mut angular_ok) = (true, true);
        if is_max && count > 0 {
            let sp = &spectra[j];
            let crit = KS_CRITICAL_1PCT / (count as f64).sqrt();
            let dr = ks_statistic(&mut radii[j], |s| yaglom_radial_cdf(sp, s));
            let da = ks_statistic(&mut coords[j], |c| yaglom_angular_cdf(sp, c));
            radial_ok = dr <= crit;
            angular_ok = da <= crit;
            radial_ks = Some(dr);
            angular_ks = Some(da);
            ks_critical = Some(crit);
        }
        branches.push(BranchYaglom {
            branch: j,
            maximal: is_max,
            alpha: alphas[j],
            count: count as u64,
            frequency: f,
            predicted: predicted[j],
            sigma,
            frequency_ok,
            radial_ks,
            angular_ks,
            ks_critical,
            radial_ok,
            angular_ok,
        });
    }
    let ok = branches
        .iter()
        .all(|b| b.frequency_ok && b.radial_ok && b.angular_ok);
    Ok(YaglomReport {
        t,
        paths: cfg.paths,
        survivors: view.survivors.len() as u64,
        core_survivors: core,
        alpha,
        maximal,
        weights_source,
        branches,
        verdict: Verdict::from_bool(ok),
        out_of_desk_scale: desk_scale_exceeded(&[t], cfg),
        provenance: provenance(domain, *x, None, Some(cfg), Some(ens.config_hash())),
    })
}

fn normalized(mut w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        w.iter_mut().for_each(|p| *p /= s);
    }
    w
}
