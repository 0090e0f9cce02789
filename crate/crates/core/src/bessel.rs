//! Modified Bessel function of the first kind `I_ν(z)` for real order
//! `ν ≥ 0` and argument `z ≥ 0`.
//!
//! * `z ≤ 30`: ascending power series (all terms positive, no cancellation).
//! * `z > 30`: Hankel large-argument expansion while it converges to full
//!   precision (small orders), otherwise the Debye uniform expansion in the
//!   order with polynomial coefficients `u_k(p)` generated by recurrence.
//!
//! Everything is computed in the exponentially scaled form `I_ν(z)·e^{-z}`
//! so heat-kernel sums can combine the Gaussian factor without overflow.

use std::f64::consts::PI;
use std::sync::OnceLock;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::NumericError;

/// Argument at which the evaluator leaves the power series.
pub const SERIES_LIMIT: f64 = 30.0;

const DEBYE_TERMS: usize = 16;

/// `I_ν(z)`. Overflows to `+∞` for `z` beyond roughly 700.
pub fn bessel_i(nu: f64, z: f64) -> Result<f64, NumericError> {
    check_args(nu, z)?;
    Ok(scaled_unchecked(nu, z) * z.exp())
}

/// `I_ν(z)·e^{-z}`.
pub fn bessel_i_scaled(nu: f64, z: f64) -> Result<f64, NumericError> {
    check_args(nu, z)?;
    Ok(scaled_unchecked(nu, z))
}

fn check_args(nu: f64, z: f64) -> Result<(), NumericError> {
    if !(nu >= 0.0) || !nu.is_finite() {
        return Err(NumericError::InvalidArgument(format!(
            "Bessel order must be finite and nonnegative, got {nu}"
        )));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(NumericError::InvalidArgument(format!(
            "Bessel argument must be finite and nonnegative, got {z}"
        )));
    }
    Ok(())
}

/// Scaled evaluation without argument checks; callers guarantee `ν, z ≥ 0`.
pub(crate) fn scaled_unchecked(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if z <= SERIES_LIMIT {
        return series_scaled(nu, z);
    }
    if let Some(v) = hankel_scaled(nu, z) {
        return v;
    }
    debye_scaled(nu, z)
}

/// Leading power-series term `(z/2)^ν / Γ(1+ν)`, the lower sandwich bound.
pub fn leading_term(nu: f64, z: f64) -> f64 {
    if z == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if nu + 1.0 < 170.0 {
        let direct = (0.5 * z).powf(nu) / gamma(nu + 1.0);
        if direct.is_finite() && direct > 1e-300 {
            return direct;
        }
    }
    (nu * (0.5 * z).ln() - ln_gamma(nu + 1.0)).exp()
}

/// `ln[(z/2)^ν / Γ(1+ν)]`.
pub fn ln_leading_term(nu: f64, z: f64) -> f64 {
    nu * (0.5 * z).ln() - ln_gamma(nu + 1.0)
}

pub(crate) fn series_scaled(nu: f64, z: f64) -> f64 {
    let first = if nu + 1.0 < 170.0 && z < 30.0 + 1e-9 {
        let direct = (0.5 * z).powf(nu) / gamma(nu + 1.0);
        if direct.is_finite() && direct > 1e-290 {
            direct * (-z).exp()
        } else {
            (nu * (0.5 * z).ln() - ln_gamma(nu + 1.0) - z).exp()
        }
    } else {
        (nu * (0.5 * z).ln() - ln_gamma(nu + 1.0) - z).exp()
    };
    if first == 0.0 {
        return 0.0;
    }
    let q = 0.25 * z * z;
    let mut term = first;
    let mut sum = first;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term < 1e-17 * sum && k > q.sqrt() {
            break;
        }
        if k > 10_000.0 {
            break;
        }
    }
    sum
}

fn hankel_scaled(nu: f64, z: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut largest = 1.0f64;
    let mut k = 0.0;
    loop {
        k += 1.0;
        let odd = 2.0 * k - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * k * z);
        if next.abs() > term.abs() && k > 1.0 {
            // diverging part of the asymptotic series; accept only if we are
            // already at full precision
            break;
        }
        term = next;
        sum += term;
        largest = largest.max(term.abs());
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
        if k > 200.0 {
            break;
        }
    }
    if term.abs() <= 1e-15 * sum.abs() && largest < 1e3 {
        Some(sum / (2.0 * PI * z).sqrt())
    } else {
        None
    }
}

fn debye_scaled(nu: f64, z: f64) -> f64 {
    let s = z / nu;
    let sq = (1.0 + s * s).sqrt();
    let p = 1.0 / sq;
    // ν·η - z with η = sq + ln(s/(1+sq)); ν·sq - z rewritten to avoid cancellation
    let exponent = nu / (sq + s) + nu * (s / (1.0 + sq)).ln();
    let polys = debye_polynomials();
    let mut series = 0.0;
    let mut scale = 1.0;
    for u in polys.iter() {
        series += horner(u, p) * scale;
        scale /= nu;
    }
    exponent.exp() / ((2.0 * PI * nu).sqrt() * sq.sqrt()) * series
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

/// Coefficient vectors (ascending powers of `p`) of the Debye polynomials
/// `u_0 … u_{DEBYE_TERMS-1}`, from
/// `u_{k+1}(p) = ½p²(1−p²)u_k'(p) + ⅛∫₀ᵖ(1−5t²)u_k(t)dt`.
fn debye_polynomials() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut out = vec![vec![1.0]];
        for _ in 1..DEBYE_TERMS {
            let u = out.last().unwrap();
            let deg = u.len() - 1;
            let mut next = vec![0.0; deg + 4];
            // ½ p² (1 − p²) u'(p)
            for (j, &c) in u.iter().enumerate().skip(1) {
                let d = c * j as f64;
                // d·p^{j-1}·½(p² − p⁴)
                next[j + 1] += 0.5 * d;
                next[j + 3] -= 0.5 * d;
            }
            // ⅛ ∫₀ᵖ (1 − 5t²) u(t) dt
            for (j, &c) in u.iter().enumerate() {
                next[j + 1] += 0.125 * c / (j as f64 + 1.0);
                next[j + 3] -= 0.125 * 5.0 * c / (j as f64 + 3.0);
            }
            while next.len() > 1 && *next.last().unwrap() == 0.0 {
                next.pop();
            }
            out.push(next);
        }
        out
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn order_zero_at_origin_is_one() {
        assert_eq!(bessel_i(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i(2.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn half_integer_closed_form() {
        // I_{1/2}(z) = sqrt(2/(πz)) sinh z
        for &z in &[0.1f64, 1.0, 5.0, 29.0, 31.0, 60.0, 200.0] {
            let exact_scaled = (2.0 / (PI * z)).sqrt() * 0.5 * (1.0 - (-2.0 * z).exp());
            let got = bessel_i_scaled(0.5, z).unwrap();
            assert!(rel(got, exact_scaled) < 1e-12, "z={z}: {got} vs {exact_scaled}");
        }
        let v = bessel_i(0.5, 1.0).unwrap();
        assert!((v - 0.937_674_888_245_488_1).abs() < 1e-12);
    }

    #[test]
    fn three_halves_closed_form() {
        // I_{3/2}(z) = sqrt(2/(πz)) (cosh z − sinh z / z)
        for &z in &[0.5f64, 3.0, 25.0, 45.0, 400.0] {
            let ez = (-2.0 * z).exp();
            let exact = (2.0 / (PI * z)).sqrt() * 0.5 * ((1.0 + ez) - (1.0 - ez) / z);
            let got = bessel_i_scaled(1.5, z).unwrap();
            assert!(rel(got, exact) < 1e-11, "z={z}: {got} vs {exact}");
        }
    }

    #[test]
    fn debye_polynomials_match_known_low_orders() {
        let u = debye_polynomials();
        // u_1 = (3p − 5p³)/24
        assert!((u[1][1] - 3.0 / 24.0).abs() < 1e-15);
        assert!((u[1][3] + 5.0 / 24.0).abs() < 1e-15);
        // u_2 = (81p² − 462p⁴ + 385p⁶)/1152
        assert!((u[2][2] - 81.0 / 1152.0).abs() < 1e-15);
        assert!((u[2][4] + 462.0 / 1152.0).abs() < 1e-15);
        assert!((u[2][6] - 385.0 / 1152.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_inputs() {
        assert!(bessel_i(-1.0, 1.0).is_err());
        assert!(bessel_i(1.0, -1.0).is_err());
    }

    #[test]
    fn series_and_asymptotic_branches_agree_across_the_switch() {
        for &nu in &[0.0, 0.3, 1.0, 2.0, 3.7, 6.0, 10.0, 14.5, 25.0, 60.0] {
            for &z in &[30.0, 32.0, 40.0, 55.0] {
                let series = series_scaled(nu, z);
                let asym = hankel_scaled(nu, z).unwrap_or_else(|| debye_scaled(nu, z));
                assert!(rel(asym, series) < 1e-10, "nu={nu} z={z}: {asym} vs {series}");
            }
        }
    }
}
