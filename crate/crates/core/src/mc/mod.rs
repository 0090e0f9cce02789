//! Monte Carlo simulation of Brownian motion killed on the boundary of a
//! multicone domain, and the estimators built on it.
//!
//! Paths are Euler steps of the free motion (exact Gaussian increments) with
//! two kill rules per step: the step lands outside the domain, or, with the
//! bridge correction on, the Brownian bridge between the step ends crosses a
//! boundary piece, which happens with probability `exp(−2 d₁d₂/Δt)` for a
//! half-space at distances `d₁, d₂`. Near the boundary the step shrinks to
//! `(d/σ)²` so that the half-space approximation is accurate.
//!
//! Each path draws from its own ChaCha8 stream selected by its index, so an
//! ensemble depends only on the inputs and never on the worker count.

mod engine;
mod estimate;
mod harmonic;

pub use engine::{
    simulate_paths, simulate_paths_multi, HorizonView, KillRecord, PathEnsemble, Survivor,
};
pub use estimate::{estimate_kernel_at, estimate_survival, kde_bandwidth};
pub use harmonic::{estimate_u, estimate_w, CorrectionTable, UEstimate};

use serde::{Deserialize, Serialize};

use crate::error::SimError;

/// Step budget for exit-time runs.
pub const STEP_BUDGET: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Largest time step.
    pub dt: f64,
    /// Smallest time step used by the boundary refinement.
    pub dt_min: f64,
    pub paths: u64,
    pub seed: u64,
    pub bridge: bool,
    /// Shrink steps near the boundary; off means plain fixed-step Euler.
    pub adaptive: bool,
    /// Step standard deviations kept between a path and the boundary.
    pub boundary_sigmas: f64,
    /// Kernel-density bandwidth; `None` selects `0.05·√t` under the guard.
    pub bandwidth: Option<f64>,
    /// Stopping radius `ρ` for harmonic-extension estimates.
    pub stop_radius: Option<f64>,
    /// Paths per node of the harmonic correction table.
    pub table_paths: u64,
    pub workers: usize,
    pub max_steps: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            dt_min: 1e-6,
            paths: 100_000,
            seed: 0,
            bridge: true,
            adaptive: true,
            boundary_sigmas: 3.0,
            bandwidth: None,
            stop_radius: None,
            table_paths: 4_000,
            workers: 1,
            max_steps: STEP_BUDGET,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::Config(msg));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive and finite, got {}", self.dt));
        }
        if !(self.dt_min > 0.0) {
            return bad(format!("dt_min must be positive, got {}", self.dt_min));
        }
        if self.paths == 0 {
            return bad("paths must be at least 1".into());
        }
        if !(self.boundary_sigmas > 0.0) {
            return bad(format!("boundary_sigmas must be positive, got {}", self.boundary_sigmas));
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) {
                return bad(format!("bandwidth must be positive, got {h}"));
            }
        }
        if let Some(r) = self.stop_radius {
            if !(r > 0.0) || !r.is_finite() {
                return bad(format!("stop radius must be positive, got {r}"));
            }
        }
        if self.workers == 0 {
            return bad("workers must be at least 1".into());
        }
        if self.max_steps == 0 || self.table_paths == 0 {
            return bad("step budget and table paths must be positive".into());
        }
        Ok(())
    }
}

/// Point estimate with its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateCI {
    pub estimate: f64,
    pub std_error: f64,
    pub paths: u64,
    pub method: String,
}

impl EstimateCI {
    pub fn interval(&self, z: f64) -> (f64, f64) {
        (self.estimate - z * self.std_error, self.estimate + z * self.std_error)
    }

    /// Mean and standard error of per-path samples.
    pub(crate) fn from_moments(sum: f64, sum_sq: f64, n: u64, method: &str) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = if n > 1 {
            ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0)
        } else {
            0.0
        };
        Self {
            estimate: mean,
            std_error: (var / nf).sqrt(),
            paths: n,
            method: method.to_string(),
        }
    }
}

/// Probability that a Brownian bridge of duration `dt` between points at
/// distances `d1`, `d2` from a hyperplane touches it.
pub fn bridge_crossing_prob(d1: f64, d2: f64, dt: f64) -> f64 {
    let a = 2.0 * d1 * d2 / dt;
    if a > 40.0 {
        // below half an ulp of 1
        return 0.0;
    }
    (-a).exp().clamp(0.0, 1.0)
}

/// Density of the first time a Brownian motion with drift `μ` started at
/// distance `r` hits zero: `r/√(2πt³) · exp(−(r + μt)²/2t)`.
pub fn hitting_time_density(r: f64, mu: f64, t: f64) -> Result<f64, SimError> {
    if !(r > 0.0) || !(t > 0.0) {
        return Err(SimError::Config(format!(
            "hitting-time density needs r > 0 and t > 0, got r = {r}, t = {t}"
        )));
    }
    let a = r + mu * t;
    Ok(r / (2.0 * std::f64::consts::PI * t * t * t).sqrt() * (-a * a / (2.0 * t)).exp())
}

/// SplitMix64 finalizer, used to derive independent seeds per purpose.
pub(crate) fn mix_seed(seed: u64, purpose: u64) -> u64 {
    let mut z = seed ^ purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
