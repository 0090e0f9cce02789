//! Monte Carlo estimates of the harmonic functions `w` (truncated cone) and
//! `u_j` (harmonic extension of `w_j` to the whole multicone).
//!
//! Exit runs have no horizon, so the step is `(d/σ)²` with no upper cap: in
//! a cone the exit time can have infinite mean, and a capped step would make
//! far excursions arbitrarily expensive.

use serde::Serialize;

use super::engine::{base_rng, path_rng, run_chunked, PathState, StepResult, Walker, PURPOSE_EXIT, PURPOSE_TABLE};
use super::{EstimateCI, SimConfig};
use crate::cone::minimal_harmonic_v;
use crate::error::{GeometryError, SimError};
use crate::geometry::{BoundaryPiece, Location, MulticoneDomain, Point, TruncatedCone};
use crate::spectral::{spectrum, SpectralData};

/// Angular intervals of the correction table built by `estimate_u`.
pub const TABLE_ANGLES: usize = 32;

/// How an exit run ended.
enum Exit {
    Killed { piece: BoundaryPiece, at: Point },
    /// Reached the stopping sphere; the point is projected onto it.
    Stopped { at: Point },
}

struct StopSphere {
    center: Point,
    radius: f64,
}

/// Runs `paths` exit paths from `start` and returns `(Σ f, Σ f²)` of the payoff.
#[allow(clippy::too_many_arguments)]
fn run_exit<F>(
    walker: &Walker,
    start: &PathState,
    paths: u64,
    stream_offset: u64,
    seed: u64,
    purpose: u64,
    cfg: &SimConfig,
    stop: Option<&StopSphere>,
    payoff: F,
) -> Result<(f64, f64), SimError>
where
    F: Fn(Exit) -> f64 + Sync,
{
    let base = base_rng(seed, purpose);
    let sigmas = cfg.boundary_sigmas;
    let chunks = run_chunked(paths, cfg.workers, |range| {
        let mut scratch = Vec::new();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for path in range {
            let mut rng = path_rng(&base, stream_offset + path);
            let mut st = start.clone();
            let mut steps = 0u64;
            let exit = loop {
                let mut h = walker.natural_step(st.dmin);
                if let Some(s) = stop {
                    let gap = s.radius - (st.pos - s.center).norm();
                    h = h.min(((gap / sigmas).powi(2)).max(cfg.dt_min));
                }
                match walker.step(&mut st, &mut scratch, h, &mut rng) {
                    StepResult::Killed { piece, at } => {
                        break Exit::Killed {
                            piece: walker.pieces.tag(piece),
                            at,
                        }
                    }
                    StepResult::Alive(_) => {
                        if let Some(s) = stop {
                            let w = st.pos - s.center;
                            let r = w.norm();
                            if r >= s.radius {
                                break Exit::Stopped {
                                    at: s.center + w * (s.radius / r),
                                };
                            }
                        }
                    }
                }
                steps += 1;
                if steps >= cfg.max_steps {
                    return Err(SimError::StepBudget {
                        path,
                        budget: cfg.max_steps,
                    });
                }
            };
            let f = payoff(exit);
            sum += f;
            sum_sq += f * f;
        }
        Ok((sum, sum_sq))
    })?;
    let mut total = (0.0, 0.0);
    for c in chunks {
        let (s, q) = c?;
        total.0 += s;
        total.1 += q;
    }
    Ok(total)
}

/// Whether `x` lies on the closed boundary of the truncated cone.
fn on_cone_boundary(cone: &TruncatedCone, x: &Point, tol: f64) -> bool {
    let w = *x - cone.vertex;
    let r = w.norm();
    if r + tol < cone.radius {
        return false;
    }
    match cone.opening.coordinate(&w, tol) {
        None => false,
        Some(c) => (r - cone.radius).abs() <= tol || c <= tol || c >= cone.opening.width() - tol,
    }
}

/// `E_x v(B_{T^C})` by exit simulation in the truncated cone alone.
fn exit_expectation(
    cone: &TruncatedCone,
    spec: &SpectralData,
    x: &Point,
    paths: u64,
    stream_offset: u64,
    purpose: u64,
    cfg: &SimConfig,
) -> Result<EstimateCI, SimError> {
    let domain = MulticoneDomain::single_cone(*cone);
    let walker = Walker::new(&domain, cfg, f64::INFINITY);
    let start = walker.start(*x)?;
    let (sum, sum_sq) = run_exit(&walker, &start, paths, stream_offset, cfg.seed, purpose, cfg, None, |exit| match exit {
        Exit::Killed {
            piece: BoundaryPiece::Base(_),
            at,
        } => {
            let b = cone.project_to_base(&at);
            minimal_harmonic_v(spec, &(b - cone.vertex)).unwrap_or(0.0)
        }
        _ => 0.0,
    })?;
    Ok(EstimateCI::from_moments(sum, sum_sq, paths, "exit-expectation"))
}

/// `w(x) = v(x) − E_x v(B_{T^C})` on the truncated cone: lateral exits
/// contribute zero, base exits contribute `v` at the exit point.
pub fn estimate_w(
    cone: &TruncatedCone,
    spec: &SpectralData,
    x: &Point,
    cfg: &SimConfig,
) -> Result<EstimateCI, SimError> {
    cfg.validate()?;
    let v = minimal_harmonic_v(spec, &(*x - cone.vertex))?;
    if on_cone_boundary(cone, x, 1e-9) {
        return Ok(EstimateCI {
            estimate: 0.0,
            std_error: 0.0,
            paths: 0,
            method: "boundary".into(),
        });
    }
    if !cone.contains(x) {
        return Err(SimError::StartOutside);
    }
    let mut ci = exit_expectation(cone, spec, x, cfg.paths, 0, PURPOSE_EXIT, cfg)?;
    ci.estimate = v - ci.estimate;
    ci.method = "w-exit".into();
    Ok(ci)
}

/// Tabulated `E_z v(B_{T^C})` on a grid in `(ln r, opening coordinate)`.
///
/// The row at the truncation radius holds `v` exactly (immediate exit) and
/// the opening edges hold zero; past the last radius the correction is
/// extended as `r^{−(n/2−1)−α}`, the decay of the leading exterior mode.
#[derive(Debug, Clone)]
pub struct CorrectionTable {
    cone: TruncatedCone,
    spectral: SpectralData,
    radii: Vec<f64>,
    angles: usize,
    values: Vec<f64>,
    std_errors: Vec<f64>,
    decay: f64,
}

impl CorrectionTable {
    pub fn build(
        cone: &TruncatedCone,
        spectral: &SpectralData,
        radii: &[f64],
        angles: usize,
        cfg: &SimConfig,
    ) -> Result<Self, SimError> {
        cfg.validate()?;
        if angles < 2 || radii.iter().any(|&r| !(r > cone.radius)) || radii.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(SimError::Config(
                "correction table needs increasing radii beyond the truncation radius and at least two angular intervals".into(),
            ));
        }
        let width = cone.opening.width();
        let mut all_radii = vec![cone.radius];
        all_radii.extend_from_slice(radii);
        let cols = angles + 1;
        let mut values = vec![0.0; all_radii.len() * cols];
        let mut std_errors = vec![0.0; all_radii.len() * cols];
        let mut node = 0u64;
        for (k, &r) in all_radii.iter().enumerate() {
            for j in 1..angles {
                let c = width * j as f64 / angles as f64;
                let z = cone.vertex + cone.opening.direction_at(c) * r;
                if k == 0 {
                    values[j] = minimal_harmonic_v(spectral, &(z - cone.vertex))?;
                    continue;
                }
                let ci = exit_expectation(cone, spectral, &z, cfg.table_paths, node * cfg.table_paths, PURPOSE_TABLE, cfg)?;
                values[k * cols + j] = ci.estimate;
                std_errors[k * cols + j] = ci.std_error;
                node += 1;
            }
        }
        let n = spectral.dimension as f64;
        Ok(Self {
            cone: *cone,
            spectral: spectral.clone(),
            radii: all_radii,
            angles,
            values,
            std_errors,
            decay: (n / 2.0 - 1.0) + spectral.alpha(),
        })
    }

    fn row_value(&self, row: usize, c: f64) -> f64 {
        let width = self.cone.opening.width();
        let x = (c / width * self.angles as f64).clamp(0.0, self.angles as f64);
        let j = (x.floor() as usize).min(self.angles - 1);
        let s = x - j as f64;
        let cols = self.angles + 1;
        (1.0 - s) * self.values[row * cols + j] + s * self.values[row * cols + j + 1]
    }

    /// Interpolated `E_z v(B_{T^C})`.
    pub fn correction(&self, z: &Point) -> Result<f64, SimError> {
        let w = *z - self.cone.vertex;
        let r = w.norm();
        let c = self
            .cone
            .opening
            .coordinate(&w, 1e-9)
            .ok_or(GeometryError::OutsideDomain(z.0))?;
        let last = self.radii.len() - 1;
        if r >= self.radii[last] {
            return Ok(self.row_value(last, c) * (r / self.radii[last]).powf(-self.decay));
        }
        let r = r.max(self.radii[0]);
        let k = self.radii.partition_point(|&q| q <= r).clamp(1, last) - 1;
        let (l0, l1) = (self.radii[k].ln(), self.radii[k + 1].ln());
        let s = (r.ln() - l0) / (l1 - l0);
        Ok((1.0 - s) * self.row_value(k, c) + s * self.row_value(k + 1, c))
    }

    /// `w(z) = v(z) − correction(z)`.
    pub fn w(&self, z: &Point) -> Result<f64, SimError> {
        let v = minimal_harmonic_v(&self.spectral, &(*z - self.cone.vertex))?;
        Ok(v - self.correction(z)?)
    }

    /// Largest standard error over the simulated nodes.
    pub fn max_std_error(&self) -> f64 {
        self.std_errors.iter().fold(0.0, |m: f64, &s| m.max(s))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct UEstimate {
    pub ci: EstimateCI,
    pub stop_radius: f64,
    /// Set when `ρ` is under ten times the largest truncation radius, where
    /// replacing `u_j` by `w_j` on the stopping sphere is a visible bias.
    pub truncation_suspect: bool,
    pub table_max_std_error: f64,
}

/// `u_j(x) = E_x[w_j(B_σ) 1{B_σ ∈ Ω_j, σ < T}]` with `σ` the exit from the
/// ball of radius `ρ` about the vertex of branch `j`.
pub fn estimate_u(domain: &MulticoneDomain, j: usize, x: &Point, cfg: &SimConfig) -> Result<UEstimate, SimError> {
    cfg.validate()?;
    let rho = cfg
        .stop_radius
        .ok_or_else(|| SimError::Config("estimating u needs a stop radius".into()))?;
    let r_max = domain.max_truncation_radius();
    if !(rho > r_max) {
        return Err(SimError::Config(format!(
            "stop radius {rho} must exceed every truncation radius (largest {r_max})"
        )));
    }
    let branch = *domain
        .branches
        .get(j)
        .ok_or_else(|| SimError::Config(format!("branch index {j} out of range")))?;
    let violations = domain.validate();
    if !violations.is_empty() {
        return Err(GeometryError::Invalid(violations).into());
    }
    let spec = spectrum(&branch.opening, 1)?;
    let table = CorrectionTable::build(&branch, &spec, &[rho], TABLE_ANGLES, cfg)?;
    let w_at = |z: &Point| -> f64 {
        if domain.locate(z) == Location::Branch(j) {
            table.w(z).unwrap_or(0.0).max(0.0)
        } else {
            0.0
        }
    };
    let finish = |ci: EstimateCI| UEstimate {
        ci,
        stop_radius: rho,
        truncation_suspect: rho < 10.0 * r_max,
        table_max_std_error: table.max_std_error(),
    };
    if (*x - branch.vertex).norm() >= rho {
        return Ok(finish(EstimateCI {
            estimate: w_at(x),
            std_error: 0.0,
            paths: 0,
            method: "outside-stop-ball".into(),
        }));
    }
    let walker = Walker::new(domain, cfg, f64::INFINITY);
    let start = walker.start(*x)?;
    let sphere = StopSphere {
        center: branch.vertex,
        radius: rho,
    };
    let (sum, sum_sq) = run_exit(&walker, &start, cfg.paths, 0, cfg.seed, PURPOSE_EXIT, cfg, Some(&sphere), |exit| match exit {
        Exit::Stopped { at } => w_at(&at),
        Exit::Killed { .. } => 0.0,
    })?;
    Ok(finish(EstimateCI::from_moments(sum, sum_sq, cfg.paths, "u-stopped")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Opening;
    use std::f64::consts::PI;

    fn cone() -> TruncatedCone {
        TruncatedCone::new(Point::ORIGIN, Opening::arc(0.0, PI), 1.0)
    }

    #[test]
    fn w_matches_closed_form() {
        let spec = spectrum(&cone().opening, 1).unwrap();
        let cfg = SimConfig {
            paths: 20_000,
            seed: 5,
            ..SimConfig::default()
        };
        let r = 2.0;
        let ci = estimate_w(&cone(), &spec, &Point::new2(0.0, r), &cfg).unwrap();
        let want = (2.0 / PI).sqrt() * (r - 1.0 / r);
        assert!((ci.estimate - want).abs() < 4.0 * ci.std_error + 1e-2, "{ci:?} vs {want}");
    }

    #[test]
    fn w_vanishes_on_base() {
        let spec = spectrum(&cone().opening, 1).unwrap();
        let ci = estimate_w(&cone(), &spec, &Point::new2(0.0, 1.0), &SimConfig::default()).unwrap();
        assert_eq!(ci.estimate, 0.0);
    }
}
