//! Closed-form quantities on a cone with vertex: the Bessel-series Dirichlet
//! heat kernel, the minimal harmonic function `v`, the survival constant
//! `γ_V`, the survival series and the Yaglom limit law.
//!
//! Points are taken relative to the vertex unless a `ConeKernelSpec` (which
//! carries the vertex) is supplied.

use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::bessel::{ln_leading_term, scaled_unchecked};
use crate::error::{AnalyticError, GeometryError, NumericError};
use crate::geometry::{Opening, Point};
use crate::quadrature::{adaptive, GaussLegendre};
use crate::spectral::{spectrum, SpectralData, MAX_MODES};

/// Directions this close to a cap axis count as lying on it.
const AXIS_TOL: f64 = 1e-9;
const DIRECTION_TOL: f64 = 1e-9;

/// Modes built by [`ConeKernelSpec::for_opening`] for caps.
pub const DEFAULT_CAP_MODES: usize = 24;

/// Spectral data plus vertex and truncation tolerance for kernel series.
#[derive(Debug, Clone)]
pub struct ConeKernelSpec {
    pub spectral: SpectralData,
    pub vertex: Point,
    /// Absolute tolerance on the truncation tail.
    pub tolerance: f64,
}

/// A truncated series value with its rigorous tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Bound on the neglected terms (plus quadrature error where relevant).
    pub error_bound: f64,
    pub terms: usize,
}

impl ConeKernelSpec {
    pub fn new(spectral: SpectralData, vertex: Point, tolerance: f64) -> Result<Self, AnalyticError> {
        if !(tolerance > 0.0) {
            return Err(NumericError::InvalidArgument(format!(
                "series tolerance must be positive, got {tolerance}"
            ))
            .into());
        }
        Ok(Self {
            spectral,
            vertex,
            tolerance,
        })
    }

    /// Arcs get the full closed-form spectrum, caps [`DEFAULT_CAP_MODES`].
    pub fn for_opening(opening: &Opening, vertex: Point, tolerance: f64) -> Result<Self, AnalyticError> {
        let modes = match opening {
            Opening::Arc { .. } => MAX_MODES,
            Opening::Cap { .. } => DEFAULT_CAP_MODES,
        };
        Self::new(spectrum(opening, modes)?, vertex, tolerance)
    }

    pub fn max_terms(&self) -> usize {
        self.spectral.len()
    }

    fn polar(&self, x: &Point) -> Result<(f64, f64), AnalyticError> {
        polar(&self.spectral, &(*x - self.vertex))
    }
}

/// `(|w|, opening coordinate)`; the vertex itself maps to radius zero.
fn polar(spectral: &SpectralData, w: &Point) -> Result<(f64, f64), AnalyticError> {
    let r = w.norm();
    if r == 0.0 {
        return Ok((0.0, 0.0));
    }
    let c = spectral
        .opening
        .coordinate(w, DIRECTION_TOL)
        .ok_or(GeometryError::OutsideDomain(w.0))?;
    Ok((r, c))
}

/// `ln` of `(z/2)^ν e^z / Γ(1+ν)` and of `(z/2)^ν e^{z²/4(ν+1)} / Γ(1+ν)`,
/// whichever is smaller, minus `z` (i.e. a bound on the scaled `I_ν`).
fn ln_scaled_majorant(nu: f64, z: f64) -> f64 {
    ln_leading_term(nu, z) + (z * z / (4.0 * (nu + 1.0)) - z).min(0.0)
}

/// Upper bound on `I_{ν+1}(z)/I_ν(z)`.
fn ratio_bound(nu: f64, z: f64) -> f64 {
    z / (nu + (nu * nu + z * z).sqrt())
}

/// Bound on `Σ_{i>k} weight(i)·Ĩ_{α_i}(z)` where `Ĩ` is the scaled Bessel
/// function and `anchor = Ĩ_{α_k}(z)`. Orders past `α_k` are bounded by the
/// chain of ratio bounds; with `majorants` the closed-form majorants are
/// also used term by term. The ratio chain is evaluated at `z_chain ≥ z`.
fn tail_sum(
    spectral: &SpectralData,
    k: usize,
    z: f64,
    z_chain: f64,
    anchor: f64,
    majorants: bool,
    weight: impl Fn(usize) -> f64,
) -> f64 {
    let per_bin = spectral.modes_per_unit_order();
    let mut chain = anchor;
    let mut order = spectral.character_bound(k);
    let mut sum = 0.0;
    for i in k + 1..k + 4 * MAX_MODES {
        let nu = spectral.character_bound(i);
        while nu >= order + 1.0 {
            chain *= ratio_bound(order, z_chain);
            order += 1.0;
        }
        let mut b = chain;
        if majorants && z > 0.0 {
            b = b.min(ln_scaled_majorant(nu, z).exp());
        }
        let w = weight(i).max(weight(i + 1));
        sum += weight(i) * b;
        let q = ratio_bound(order, z_chain);
        if q < 1.0 {
            let rest = per_bin * w * chain * (1.0 / (1.0 - q) + 1.0 / (nu * (1.0 - q).powi(2)));
            if rest <= 1e-2 * sum || rest < 1e-300 {
                return sum + rest;
            }
        }
    }
    f64::INFINITY
}

/// Dirichlet heat kernel `p^V(t, x, y)` of the cone.
///
/// Terms are added until the tail bound drops below the spec tolerance. In
/// 3D only zonal modes are available, so one of `x`, `y` must lie on the cap
/// axis (where every non-zonal mode vanishes).
pub fn cone_heat_kernel(
    spec: &ConeKernelSpec,
    t: f64,
    x: &Point,
    y: &Point,
) -> Result<SeriesValue, AnalyticError> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(NumericError::InvalidArgument(format!("time must be positive, got {t}")).into());
    }
    let s = &spec.spectral;
    let (r, c1) = spec.polar(x)?;
    let (rho, c2) = spec.polar(y)?;
    if s.dimension == 3 && r > 0.0 && rho > 0.0 && c1 > AXIS_TOL && c2 > AXIS_TOL {
        return Err(NumericError::InvalidArgument(
            "the cap kernel uses zonal modes only; one point must lie on the cap axis".into(),
        )
        .into());
    }
    if r == 0.0 || rho == 0.0 {
        return Ok(SeriesValue {
            value: 0.0,
            error_bound: 0.0,
            terms: 0,
        });
    }
    let nu0 = s.dimension as f64 / 2.0 - 1.0;
    let z = r * rho / t;
    let pref = (r * rho).powf(-nu0) / t * (-(r - rho) * (r - rho) / (2.0 * t)).exp();
    let eps = spec.tolerance;
    let sq = |i: usize| {
        let b = s.sup_bound(i);
        b * b
    };

    let mut value = 0.0;
    let mut k = 0;
    let mut last_scaled = 0.0;
    while k < s.len() {
        k += 1;
        let alpha = s.characters[k - 1];
        last_scaled = scaled_unchecked(alpha, z);
        let m1 = s.eval_coordinate(k, c1)?;
        let m2 = s.eval_coordinate(k, c2)?;
        value += pref * last_scaled * (m1 * m2);
        let next = pref * sq(k + 1) * last_scaled.min(ln_scaled_majorant(s.character_bound(k + 1), z).exp());
        if next < eps {
            let tail = pref * tail_sum(s, k, z, z, last_scaled, true, sq);
            if tail < eps {
                return Ok(SeriesValue {
                    value,
                    error_bound: tail,
                    terms: k,
                });
            }
        }
    }
    // out of modes: locate the smallest sufficient truncation
    let mut required = k;
    let mut anchor = last_scaled;
    loop {
        let tail = pref * tail_sum(s, required, z, z, anchor, true, sq);
        if tail < eps || required >= MAX_MODES {
            break;
        }
        required += 1;
        anchor = scaled_unchecked(s.character_bound(required), z);
    }
    let required = if required >= MAX_MODES { MAX_MODES + 1 } else { required };
    Err(NumericError::Truncation {
        required,
        limit: s.len(),
    }
    .into())
}

/// `v(x) = |x|^κ m^1(θ)`, with `x` measured from the vertex.
pub fn minimal_harmonic_v(spectral: &SpectralData, x: &Point) -> Result<f64, AnalyticError> {
    let (r, c) = polar(spectral, x)?;
    if r == 0.0 {
        return Ok(0.0);
    }
    Ok(r.powf(spectral.kappa) * spectral.eval_coordinate(1, c)?)
}

/// `γ_V = Γ((κ+n)/2) / (2^{κ/2} Γ(κ + n/2)) · ∫_𝔇 m^1 dσ`.
pub fn gamma_v(spectral: &SpectralData) -> f64 {
    let n = spectral.dimension as f64;
    let kappa = spectral.kappa;
    let ln = ln_gamma((kappa + n) / 2.0) - kappa / 2.0 * 2f64.ln() - ln_gamma(kappa + n / 2.0);
    ln.exp() * spectral.integral_m1()
}

/// `γ_V 2^α Γ(1+α) = ∫_V v(y) e^{−|y|²/2} dy`.
pub fn yaglom_normalizer(spectral: &SpectralData) -> f64 {
    let alpha = spectral.alpha();
    gamma_v(spectral) * (alpha * 2f64.ln() + ln_gamma(1.0 + alpha)).exp()
}

/// Yaglom limit density `v(y) e^{−|y|²/2} / (γ_V 2^α Γ(1+α))`, `y` from the vertex.
pub fn yaglom_density_cone(spectral: &SpectralData, y: &Point) -> Result<f64, AnalyticError> {
    let v = minimal_harmonic_v(spectral, y)?;
    Ok(v * (-0.5 * y.dot(y)).exp() / yaglom_normalizer(spectral))
}

/// CDF of the radius under the Yaglom law: `|Y|²/2 ~ Gamma((κ+n)/2)`.
pub fn yaglom_radial_cdf(spectral: &SpectralData, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let shape = (spectral.kappa + spectral.dimension as f64) / 2.0;
    gamma_lr(shape, 0.5 * s * s)
}

/// CDF of the opening coordinate under the Yaglom law (density ∝ `m^1`).
pub fn yaglom_angular_cdf(spectral: &SpectralData, coordinate: f64) -> f64 {
    match spectral.opening {
        Opening::Arc { start, end } => {
            let len = end - start;
            let c = coordinate.clamp(0.0, len);
            0.5 * (1.0 - (std::f64::consts::PI * c / len).cos())
        }
        Opening::Cap { colatitude, .. } => {
            let c = coordinate.clamp(0.0, colatitude);
            let rule = GaussLegendre::new(20);
            let f = |psi: f64| spectral.eval_coordinate(1, psi).unwrap_or(0.0) * psi.sin();
            let panels = |w: f64| ((w / colatitude * 256.0).ceil() as usize).max(1);
            let part = rule.integrate_composite(0.0, c, panels(c), f);
            let whole = rule.integrate_composite(0.0, colatitude, 256, f);
            (part / whole).clamp(0.0, 1.0)
        }
    }
}

/// `P_x(T^V > t) = ∫_V p^V(t, x, y) dy`, summed mode by mode: the angular
/// integral is the stored `∫ m^i dσ` and the radial integral is done by
/// adaptive quadrature over `|ρ − r| ≤ 10√t`.
pub fn cone_survival_series(spec: &ConeKernelSpec, t: f64, x: &Point) -> Result<SeriesValue, AnalyticError> {
    const TARGET: f64 = 1e-7;
    const QUAD_TOL: f64 = 1e-10;
    if !(t > 0.0) || !t.is_finite() {
        return Err(NumericError::InvalidArgument(format!("time must be positive, got {t}")).into());
    }
    let s = &spec.spectral;
    let (r, c) = spec.polar(x)?;
    if r == 0.0 {
        return Ok(SeriesValue {
            value: 0.0,
            error_bound: 0.0,
            terms: 0,
        });
    }
    let n = s.dimension as f64;
    let nu0 = n / 2.0 - 1.0;
    let lo = (r - 10.0 * t.sqrt()).max(0.0);
    let hi = r + 10.0 * t.sqrt();
    let z_max = r * hi / t;
    let radial = |alpha: f64| {
        adaptive(lo, hi, QUAD_TOL, |rho| {
            if rho == 0.0 {
                return 0.0;
            }
            let z = r * rho / t;
            (r * rho).powf(-nu0) / t
                * (-(r - rho) * (r - rho) / (2.0 * t)).exp()
                * scaled_unchecked(alpha, z)
                * rho.powf(n - 1.0)
        })
    };
    let weight = |i: usize| s.sup_bound(i) * s.mode_integral_bound(i);

    let mut value = 0.0;
    let mut quad_error = 0.0;
    let mut anchor: Option<(usize, f64)> = None;
    for k in 1..=s.len() {
        let integral = s.mode_integrals[k - 1];
        if integral == 0.0 {
            continue;
        }
        let q = radial(s.characters[k - 1])?;
        value += s.eval_coordinate(k, c)? * integral * q.value;
        quad_error += q.error * s.sup_bound(k) * integral.abs();
        anchor = Some((k, q.value));
        // R_j ≤ R_k · Π ratio bounds at z_max for every later mode
        let tail = tail_sum(s, k, z_max, z_max, q.value, false, weight);
        if tail < TARGET {
            return Ok(SeriesValue {
                value,
                error_bound: tail + quad_error,
                terms: k,
            });
        }
    }
    let limit = s.len();
    let required = match anchor {
        Some((k, _)) => k + 1,
        None => 1,
    };
    Err(NumericError::Truncation {
        required: required.max(limit + 1),
        limit,
    }
    .into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn half_plane() -> ConeKernelSpec {
        ConeKernelSpec::for_opening(&Opening::arc(0.0, PI), Point::ORIGIN, 1e-14).unwrap()
    }

    #[test]
    fn ratio_bound_holds() {
        for &nu in &[0.0, 0.5, 1.0, 3.3, 10.0, 50.0] {
            for &z in &[0.01, 0.5, 3.0, 20.0, 45.0, 300.0, 5000.0] {
                let a = scaled_unchecked(nu, z);
                let b = scaled_unchecked(nu + 1.0, z);
                if a > 1e-280 {
                    assert!(b / a <= ratio_bound(nu, z) * (1.0 + 1e-12), "nu={nu} z={z}");
                }
            }
        }
    }

    #[test]
    fn half_plane_kernel_at_reference_point() {
        let k = cone_heat_kernel(&half_plane(), 1.0, &Point::new2(0.0, 1.0), &Point::new2(0.0, 1.0)).unwrap();
        let want = (1.0 - (-2f64).exp()) / (2.0 * PI);
        assert!((k.value - want).abs() < 1e-12, "{} vs {want}", k.value);
        assert!(k.error_bound < 1e-14);
    }

    #[test]
    fn kernel_is_symmetric() {
        let spec = half_plane();
        let x = Point::new2(0.3, 1.2);
        let y = Point::new2(-1.5, 0.4);
        let a = cone_heat_kernel(&spec, 0.7, &x, &y).unwrap();
        let b = cone_heat_kernel(&spec, 0.7, &y, &x).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn reports_required_truncation() {
        let spec = ConeKernelSpec::new(spectrum(&Opening::arc(0.0, PI), 3).unwrap(), Point::ORIGIN, 1e-12).unwrap();
        let err = cone_heat_kernel(&spec, 0.1, &Point::new2(0.0, 2.0), &Point::new2(0.5, 2.0)).unwrap_err();
        match err {
            AnalyticError::Numeric(NumericError::Truncation { required, limit }) => {
                assert_eq!(limit, 3);
                assert!(required > 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn off_axis_cap_kernel_is_refused() {
        let spec = ConeKernelSpec::for_opening(&Opening::polar_cap(PI / 2.0), Point::ORIGIN, 1e-10).unwrap();
        let x = Point::new3(0.5, 0.0, 1.0);
        let y = Point::new3(0.0, 0.5, 1.0);
        assert!(cone_heat_kernel(&spec, 1.0, &x, &y).is_err());
        assert!(cone_heat_kernel(&spec, 1.0, &x, &Point::new3(0.0, 0.0, 1.0)).is_ok());
    }

    #[test]
    fn hemisphere_kernel_matches_reflection() {
        let spec = ConeKernelSpec::for_opening(&Opening::polar_cap(PI / 2.0), Point::ORIGIN, 1e-12).unwrap();
        let x = Point::new3(0.0, 0.0, 1.0);
        let y = Point::new3(0.4, -0.3, 0.8);
        let t = 0.8;
        let g = |d2: f64| (2.0 * PI * t).powf(-1.5) * (-d2 / (2.0 * t)).exp();
        let ybar = Point::new3(0.4, -0.3, -0.8);
        let want = g((x - y).dot(&(x - y))) - g((x - ybar).dot(&(x - ybar)));
        let got = cone_heat_kernel(&spec, t, &x, &y).unwrap();
        assert!(((got.value - want) / want).abs() < 1e-8, "{} vs {want}", got.value);
    }

    #[test]
    fn harmonic_v_examples() {
        let hp = spectrum(&Opening::arc(0.0, PI), 1).unwrap();
        let v = minimal_harmonic_v(&hp, &Point::new2(0.0, 0.7)).unwrap();
        assert!((v - 0.7 * (2.0 / PI).sqrt()).abs() < 1e-15);
        assert_eq!(minimal_harmonic_v(&hp, &Point::new2(3.0, 0.0)).unwrap(), 0.0);
        let qp = spectrum(&Opening::arc(0.0, PI / 2.0), 1).unwrap();
        let v = minimal_harmonic_v(&qp, &Point::new2(1.0, 1.0)).unwrap();
        assert!((v - 2.0 * (4.0 / PI).sqrt()).abs() < 1e-12);
        assert!(minimal_harmonic_v(&qp, &Point::new2(-1.0, 1.0)).is_err());
    }

    #[test]
    fn gamma_v_examples() {
        let hp = spectrum(&Opening::arc(0.0, PI), 1).unwrap();
        assert!((gamma_v(&hp) - 1.0).abs() < 1e-12);
        let qp = spectrum(&Opening::arc(0.0, PI / 2.0), 1).unwrap();
        assert!((gamma_v(&qp) - (4.0 / PI).sqrt() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn yaglom_density_at_reference_point() {
        let hp = spectrum(&Opening::arc(0.0, PI), 1).unwrap();
        let d = yaglom_density_cone(&hp, &Point::new2(0.0, 1.0)).unwrap();
        let phi1 = (-0.5f64).exp() / (2.0 * PI).sqrt();
        assert!((d - phi1).abs() < 1e-12);
    }

    #[test]
    fn survival_matches_gaussian_cdf() {
        let s = cone_survival_series(&half_plane(), 1.0, &Point::new2(0.0, 1.0)).unwrap();
        assert!((s.value - 0.682_689_492_137_085_9).abs() < 1e-6, "{}", s.value);
    }
}
