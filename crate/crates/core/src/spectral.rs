//! Dirichlet spectrum of the Laplace–Beltrami operator on a cone opening.
//!
//! Arcs have the closed form `λ_k = (kπ/L)²`, `m_k(θ) = √(2/L) sin(kπ(θ−θ_a)/L)`.
//! Polar caps are handled in the zonal (azimuthally symmetric) sector only:
//! the eigenfunctions are Legendre functions `P_ν(cos ψ)` with `P_ν(cos θ₀) = 0`,
//! found by shooting on the Legendre equation from the pole.

use std::f64::consts::{PI, TAU};

use crate::error::{GeometryError, SpectralError};
use crate::geometry::{Opening, Point};
use crate::quadrature::GaussLegendre;

/// Largest number of modes `spectrum` will build.
pub const MAX_MODES: usize = 10_000;

/// Degree search window and bracketing grid for cap eigenvalues.
pub const DEGREE_LIMIT: f64 = 200.0;
pub const BRACKET_STEP: f64 = 1e-2;
pub const ROOT_TOLERANCE: f64 = 1e-12;

const SCAN_RTOL: f64 = 1e-7;

/// Tolerance for treating a direction as lying on the closed opening.
const DIRECTION_TOL: f64 = 1e-9;

#[derive(Debug, Clone)]
enum Mode {
    Sine { length: f64, k: f64 },
    Zonal(ZonalTable),
}

/// Normalized zonal eigenfunction tabulated on a uniform colatitude grid,
/// evaluated by cubic Hermite interpolation of `(y, y')`.
#[derive(Debug, Clone)]
struct ZonalTable {
    colatitude: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl ZonalTable {
    fn eval(&self, psi: f64) -> f64 {
        if psi >= self.colatitude {
            return 0.0;
        }
        let x = psi / self.step;
        let k = (x.floor() as usize).min(self.values.len() - 2);
        let s = x - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (d0, d1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let s2 = s * s;
        let s3 = s2 * s;
        (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * d0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * d1
    }
}

/// Eigenvalues, characters and eigenfunctions of an opening.
#[derive(Debug, Clone)]
pub struct SpectralData {
    pub opening: Opening,
    pub dimension: usize,
    /// `λ^1 < λ^2 ≤ …`
    pub eigenvalues: Vec<f64>,
    /// `α^i = (λ^i + (n/2 − 1)²)^{1/2}`
    pub characters: Vec<f64>,
    /// `κ = 1 + α^1 − n/2`
    pub kappa: f64,
    /// `β = 1 + α^1 + n/2`
    pub beta: f64,
    /// `∫_𝔇 m^i dσ`
    pub mode_integrals: Vec<f64>,
    /// `sup_𝔇 |m^i|`
    pub sup_bounds: Vec<f64>,
    modes: Vec<Mode>,
}

impl SpectralData {
    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Character of the opening, `α = α^1`.
    pub fn alpha(&self) -> f64 {
        self.characters[0]
    }

    /// `I₁ = ∫_𝔇 m^1 dσ`.
    pub fn integral_m1(&self) -> f64 {
        self.mode_integrals[0]
    }

    /// `m^i` at a coordinate of the closed opening (1-based `i`).
    pub fn eval_coordinate(&self, i: usize, coordinate: f64) -> Result<f64, SpectralError> {
        let mode = self.mode(i)?;
        Ok(eval_mode(mode, coordinate))
    }

    /// `m^i(θ)` for a direction (any nonzero vector) in the closed opening.
    pub fn eigenfunction_eval(&self, i: usize, direction: &Point) -> Result<f64, SpectralError> {
        let mode = self.mode(i)?;
        let c = self
            .opening
            .coordinate(direction, DIRECTION_TOL)
            .ok_or(GeometryError::OutsideOpening)?;
        Ok(eval_mode(mode, c))
    }

    fn mode(&self, i: usize) -> Result<&Mode, SpectralError> {
        if i == 0 || i > self.modes.len() {
            return Err(SpectralError::ModeIndex {
                index: i,
                count: self.modes.len(),
            });
        }
        Ok(&self.modes[i - 1])
    }

    /// Character of mode `i` (1-based); beyond the computed modes a lower
    /// bound from the observed spacing is returned.
    pub fn character_bound(&self, i: usize) -> f64 {
        let k = self.characters.len();
        if i <= k {
            return self.characters[i - 1];
        }
        match self.opening {
            Opening::Arc { start, end } => i as f64 * PI / (end - start),
            Opening::Cap { colatitude, .. } => {
                let spacing = if k >= 2 {
                    self.characters
                        .windows(2)
                        .map(|w| w[1] - w[0])
                        .fold(f64::INFINITY, f64::min)
                } else {
                    PI / colatitude
                };
                self.characters[k - 1] + 0.9 * spacing * (i - k) as f64
            }
        }
    }

    /// Upper bound on `|∫_𝔇 m^i dσ|`, extrapolated past the computed modes.
    pub fn mode_integral_bound(&self, i: usize) -> f64 {
        if i <= self.mode_integrals.len() {
            return self.mode_integrals[i - 1].abs();
        }
        match self.opening {
            Opening::Arc { start, end } => {
                let len = end - start;
                if i % 2 == 1 {
                    (2.0 / len).sqrt() * 2.0 * len / (i as f64 * PI)
                } else {
                    0.0
                }
            }
            Opening::Cap { .. } => self.sup_bound(i) * self.opening.measure(),
        }
    }

    /// Upper bound on the number of modes whose characters fall in any
    /// interval of unit length.
    pub(crate) fn modes_per_unit_order(&self) -> f64 {
        let spacing = match self.opening {
            Opening::Arc { start, end } => PI / (end - start),
            Opening::Cap { .. } => {
                let k = self.characters.len();
                self.character_bound(k + 2) - self.character_bound(k + 1)
            }
        };
        (1.0 / spacing).ceil() + 1.0
    }

    /// Upper bound on `sup |m^i|`, extrapolated past the computed modes.
    pub fn sup_bound(&self, i: usize) -> f64 {
        let k = self.sup_bounds.len();
        if i <= k {
            return self.sup_bounds[i - 1];
        }
        match self.opening {
            Opening::Arc { start, end } => (2.0 / (end - start)).sqrt(),
            Opening::Cap { .. } => {
                self.sup_bounds[k - 1] * (self.character_bound(i) / self.characters[k - 1]).sqrt()
                    * 1.5
            }
        }
    }
}

fn eval_mode(mode: &Mode, c: f64) -> f64 {
    match *mode {
        Mode::Sine { length, k } => {
            if c <= 0.0 || c >= length {
                0.0
            } else {
                (2.0 / length).sqrt() * (k * PI * c / length).sin()
            }
        }
        Mode::Zonal(ref table) => table.eval(c),
    }
}

/// First `count` Dirichlet eigenpairs of the opening.
pub fn spectrum(opening: &Opening, count: usize) -> Result<SpectralData, SpectralError> {
    if count == 0 {
        return Err(SpectralError::NoModes);
    }
    if count > MAX_MODES {
        return Err(SpectralError::TooManyModes {
            requested: count,
            limit: MAX_MODES,
        });
    }
    if let Some(msg) = opening.violations().into_iter().next() {
        return Err(SpectralError::Geometry(GeometryError::Invalid(vec![
            crate::geometry::Violation {
                kind: crate::geometry::ViolationKind::Opening { branch: 0 },
                message: msg,
            },
        ])));
    }
    match *opening {
        Opening::Arc { start, end } => Ok(arc_spectrum(opening, end - start, count)),
        Opening::Cap { colatitude, .. } => cap_spectrum(opening, colatitude, count),
    }
}

fn arc_spectrum(opening: &Opening, length: f64, count: usize) -> SpectralData {
    let mut eigenvalues = Vec::with_capacity(count);
    let mut modes = Vec::with_capacity(count);
    let mut mode_integrals = Vec::with_capacity(count);
    let norm = (2.0 / length).sqrt();
    for k in 1..=count {
        let kf = k as f64;
        let root = kf * PI / length;
        eigenvalues.push(root * root);
        modes.push(Mode::Sine { length, k: kf });
        // ∫₀ᴸ sin(kπu/L) du = L(1 − cos kπ)/(kπ)
        let integral = if k % 2 == 1 { 2.0 * length / (kf * PI) } else { 0.0 };
        mode_integrals.push(norm * integral);
    }
    let characters: Vec<f64> = (1..=count).map(|k| k as f64 * PI / length).collect();
    let alpha = characters[0];
    SpectralData {
        opening: *opening,
        dimension: 2,
        eigenvalues,
        kappa: alpha,
        beta: 2.0 + alpha,
        characters,
        mode_integrals,
        sup_bounds: vec![norm; count],
        modes,
    }
}

fn cap_spectrum(
    opening: &Opening,
    colatitude: f64,
    count: usize,
) -> Result<SpectralData, SpectralError> {
    let degrees = cap_degrees(colatitude, count)?;
    let rule = GaussLegendre::new(16);
    let mut eigenvalues = Vec::with_capacity(count);
    let mut characters = Vec::with_capacity(count);
    let mut modes = Vec::with_capacity(count);
    let mut mode_integrals = Vec::with_capacity(count);
    let mut sup_bounds = Vec::with_capacity(count);
    for &nu in &degrees {
        let lambda = nu * (nu + 1.0);
        let mut table = tabulate_zonal(lambda, colatitude, nu);
        let panels = table.values.len().min(4096);
        let norm2 = TAU
            * rule.integrate_composite(0.0, colatitude, panels, |psi| {
                let y = table.eval(psi);
                y * y * psi.sin()
            });
        let scale = 1.0 / norm2.sqrt();
        table.values.iter_mut().for_each(|v| *v *= scale);
        table.slopes.iter_mut().for_each(|v| *v *= scale);
        let integral = TAU * rule.integrate_composite(0.0, colatitude, panels, |psi| table.eval(psi) * psi.sin());
        let sup = table.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) * (1.0 + 1e-6);
        eigenvalues.push(lambda);
        // λ + (n/2 − 1)² with n = 3 gives (ν + 1/2)²
        characters.push((lambda + 0.25).sqrt());
        mode_integrals.push(integral);
        sup_bounds.push(sup);
        modes.push(Mode::Zonal(table));
    }
    let alpha = characters[0];
    Ok(SpectralData {
        opening: *opening,
        dimension: 3,
        eigenvalues,
        kappa: alpha - 0.5,
        beta: 2.5 + alpha,
        characters,
        mode_integrals,
        sup_bounds,
        modes,
    })
}

/// Degrees `ν` with `P_ν(cos θ₀) = 0`, in increasing order.
///
/// The grid scan runs the integrator at a looser tolerance; every bracket is
/// re-checked at full accuracy before bisection.
pub fn cap_degrees(colatitude: f64, count: usize) -> Result<Vec<f64>, SpectralError> {
    let mut roots: Vec<f64> = Vec::with_capacity(count);
    let mut lo = 0.0;
    let mut f_lo = shoot(0.0, colatitude, SCAN_RTOL);
    while roots.len() < count {
        let hi = lo + BRACKET_STEP;
        if hi > DEGREE_LIMIT {
            return Err(SpectralError::Bracket {
                lo: 0.0,
                hi: DEGREE_LIMIT,
                found: roots.len(),
                requested: count,
            });
        }
        let f_hi = shoot(hi, colatitude, SCAN_RTOL);
        if f_lo.signum() != f_hi.signum() || f_hi == 0.0 {
            let root = refine(lo, hi, colatitude);
            if roots.last().is_none_or(|&r| root - r > 0.5 * BRACKET_STEP) {
                roots.push(root);
            }
        }
        lo = hi;
        f_lo = f_hi;
    }
    Ok(roots)
}

fn refine(lo: f64, hi: f64, colatitude: f64) -> f64 {
    // widen by one grid cell on each side until the accurate values bracket
    let (mut a, mut b) = (lo, hi);
    let mut fa = shoot(a, colatitude, Stepper::RTOL);
    let mut fb = shoot(b, colatitude, Stepper::RTOL);
    for _ in 0..4 {
        if fa == 0.0 {
            return a;
        }
        if fb == 0.0 {
            return b;
        }
        if fa.signum() != fb.signum() {
            break;
        }
        a = (a - BRACKET_STEP).max(0.0);
        b += BRACKET_STEP;
        fa = shoot(a, colatitude, Stepper::RTOL);
        fb = shoot(b, colatitude, Stepper::RTOL);
    }
    bisect(a, b, fa, colatitude)
}

fn bisect(mut lo: f64, mut hi: f64, mut f_lo: f64, colatitude: f64) -> f64 {
    while hi - lo > ROOT_TOLERANCE {
        let mid = 0.5 * (lo + hi);
        let f_mid = shoot(mid, colatitude, Stepper::RTOL);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `y(θ₀)` for the regular solution of `y'' + cot θ y' + ν(ν+1) y = 0`, `y(0) = 1`.
fn shoot(nu: f64, colatitude: f64, rtol: f64) -> f64 {
    let lambda = nu * (nu + 1.0);
    let (start, mut state) = pole_start(lambda, 1e-3 / (1.0 + nu));
    let mut solver = Stepper::with_tolerance(lambda, rtol);
    solver.advance(&mut state, start, colatitude);
    state[0]
}

/// Regular expansion `y = 1 − λθ²/4 + λ(λ − 2/3)θ⁴/64` at a small colatitude.
fn pole_start(lambda: f64, theta: f64) -> (f64, [f64; 2]) {
    let a = -lambda / 4.0;
    let b = lambda * (lambda - 2.0 / 3.0) / 64.0;
    let t2 = theta * theta;
    let y = 1.0 + a * t2 + b * t2 * t2;
    let dy = 2.0 * a * theta + 4.0 * b * t2 * theta;
    (theta, [y, dy])
}

fn tabulate_zonal(lambda: f64, colatitude: f64, nu: f64) -> ZonalTable {
    let intervals = 4096usize.max((64.0 * nu * colatitude) as usize);
    let step = colatitude / intervals as f64;
    let mut values = Vec::with_capacity(intervals + 1);
    let mut slopes = Vec::with_capacity(intervals + 1);
    values.push(1.0);
    slopes.push(0.0);
    let (start, mut state) = pole_start(lambda, (0.5 * step).min(1e-3 / (1.0 + nu)));
    let mut theta = start;
    let mut solver = Stepper::new(lambda);
    for k in 1..=intervals {
        let target = step * k as f64;
        solver.advance(&mut state, theta, target);
        theta = target;
        values.push(state[0]);
        slopes.push(state[1]);
    }
    // exact Dirichlet value at the rim
    if let Some(last) = values.last_mut() {
        *last = 0.0;
    }
    ZonalTable {
        colatitude,
        step,
        values,
        slopes,
    }
}

/// Adaptive Dormand–Prince 5(4) integrator for the Legendre system.
struct Stepper {
    lambda: f64,
    h: f64,
    rtol: f64,
}

impl Stepper {
    const RTOL: f64 = 1e-12;

    fn new(lambda: f64) -> Self {
        Self::with_tolerance(lambda, Self::RTOL)
    }

    fn with_tolerance(lambda: f64, rtol: f64) -> Self {
        Self {
            lambda,
            h: 1e-3 / (1.0 + lambda.sqrt()),
            rtol,
        }
    }

    fn rhs(&self, theta: f64, s: &[f64; 2]) -> [f64; 2] {
        [s[1], -s[1] * theta.cos() / theta.sin() - self.lambda * s[0]]
    }

    fn advance(&mut self, state: &mut [f64; 2], mut theta: f64, end: f64) {
        const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [
                19372.0 / 6561.0,
                -25360.0 / 2187.0,
                64448.0 / 6561.0,
                -212.0 / 729.0,
                0.0,
                0.0,
            ],
            [
                9017.0 / 3168.0,
                -355.0 / 33.0,
                46732.0 / 5247.0,
                49.0 / 176.0,
                -5103.0 / 18656.0,
                0.0,
            ],
            [
                35.0 / 384.0,
                0.0,
                500.0 / 1113.0,
                125.0 / 192.0,
                -2187.0 / 6784.0,
                11.0 / 84.0,
            ],
        ];
        const B5: [f64; 7] = [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
            0.0,
        ];
        const B4: [f64; 7] = [
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ];
        while theta < end {
            let h = self.h.min(end - theta);
            let mut k = [[0.0f64; 2]; 7];
            for stage in 0..7 {
                let mut s = *state;
                for (j, kj) in k.iter().enumerate().take(stage) {
                    s[0] += h * A[stage][j] * kj[0];
                    s[1] += h * A[stage][j] * kj[1];
                }
                k[stage] = self.rhs(theta + C[stage] * h, &s);
            }
            let mut hi = *state;
            let mut err = [0.0f64; 2];
            for stage in 0..7 {
                for d in 0..2 {
                    hi[d] += h * B5[stage] * k[stage][d];
                    err[d] += h * (B5[stage] - B4[stage]) * k[stage][d];
                }
            }
            let atol = 1e-2 * self.rtol;
            let scale0 = atol + self.rtol * state[0].abs().max(hi[0].abs());
            let scale1 = atol
                + self.rtol * (state[1].abs().max(hi[1].abs())).max(self.lambda.sqrt() * hi[0].abs());
            let e = ((err[0] / scale0).powi(2) + (err[1] / scale1).powi(2)).sqrt() / 2f64.sqrt();
            if e <= 1.0 {
                theta += h;
                *state = hi;
                let grow = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).min(5.0) };
                if h == self.h {
                    self.h *= grow;
                }
            } else {
                self.h = h * (0.9 * e.powf(-0.25)).max(0.1);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_plane_arc() {
        let s = spectrum(&Opening::arc(0.0, PI), 1).unwrap();
        assert!((s.eigenvalues[0] - 1.0).abs() < 1e-15);
        assert!((s.alpha() - 1.0).abs() < 1e-15);
        assert!((s.kappa - 1.0).abs() < 1e-15);
        assert!((s.beta - 3.0).abs() < 1e-15);
        let m = s.eval_coordinate(1, PI / 2.0).unwrap();
        assert!((m - (2.0 / PI).sqrt()).abs() < 1e-15);
        assert_eq!(s.eval_coordinate(1, 0.0).unwrap(), 0.0);
        assert!((s.integral_m1() - 2.0 * (2.0 / PI).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn quarter_plane_arc() {
        let s = spectrum(&Opening::arc(0.0, PI / 2.0), 2).unwrap();
        assert!((s.eigenvalues[0] - 4.0).abs() < 1e-13);
        assert!((s.eigenvalues[1] - 16.0).abs() < 1e-13);
        assert!((s.characters[1] - 4.0).abs() < 1e-14);
        assert!((s.kappa - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hemisphere_ground_state_is_degree_one() {
        let s = spectrum(&Opening::polar_cap(PI / 2.0), 1).unwrap();
        assert!((s.eigenvalues[0] - 2.0).abs() < 1e-10, "{}", s.eigenvalues[0]);
        assert!((s.alpha() - 1.5).abs() < 1e-10);
        assert!((s.kappa - 1.0).abs() < 1e-10);
        let pole = s.eval_coordinate(1, 0.0).unwrap();
        assert!((pole - (3.0 / (2.0 * PI)).sqrt()).abs() < 1e-9, "{pole}");
        // m ∝ cos ψ
        let v = s.eval_coordinate(1, 1.0).unwrap();
        assert!((v - pole * 1f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn hemisphere_zonal_degrees_are_odd_integers() {
        let d = cap_degrees(PI / 2.0, 3).unwrap();
        for (got, want) in d.iter().zip([1.0, 3.0, 5.0]) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
    }

    #[test]
    fn cap_modes_are_orthonormal() {
        let theta0 = 1.1;
        let s = spectrum(&Opening::polar_cap(theta0), 4).unwrap();
        let rule = GaussLegendre::new(20);
        for i in 1..=4 {
            for j in 1..=4 {
                let g = TAU
                    * rule.integrate_composite(0.0, theta0, 512, |psi| {
                        s.eval_coordinate(i, psi).unwrap() * s.eval_coordinate(j, psi).unwrap() * psi.sin()
                    });
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((g - want).abs() < 1e-8, "<{i},{j}> = {g}");
            }
        }
    }

    #[test]
    fn mode_index_is_checked() {
        let s = spectrum(&Opening::arc(0.0, 1.0), 2).unwrap();
        assert!(s.eval_coordinate(0, 0.5).is_err());
        assert!(s.eval_coordinate(3, 0.5).is_err());
    }

    #[test]
    fn too_many_modes_is_an_error() {
        assert!(matches!(
            spectrum(&Opening::arc(0.0, 1.0), MAX_MODES + 1),
            Err(SpectralError::TooManyModes { .. })
        ));
    }

    #[test]
    fn direction_outside_opening_is_an_error() {
        let s = spectrum(&Opening::arc(0.0, PI / 2.0), 1).unwrap();
        assert!(s.eigenfunction_eval(1, &Point::new2(-1.0, -1.0)).is_err());
        assert!(s.eigenfunction_eval(1, &Point::new2(1.0, 1.0)).is_ok());
    }
}
