//! Gauss–Legendre rules and a simple adaptive integrator built on them.

use std::f64::consts::PI;

use crate::error::NumericError;

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule over `panels` equal sub-intervals.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|k| {
                let lo = a + h * k as f64;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let n = n as f64;
    let dp = n * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Result of an adaptive integration: value plus estimated absolute error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

/// Adaptive bisection with a 20-point rule; a panel is accepted once the
/// whole-panel and split-panel estimates agree to `tol` scaled by panel width.
pub fn adaptive<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    tol: f64,
    mut f: F,
) -> Result<Quadrature, NumericError> {
    const MAX_DEPTH: u32 = 48;
    const MAX_PANELS: usize = 200_000;
    let rule = GaussLegendre::new(20);
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let width = (b - a).abs();
    let mut value = 0.0;
    let mut error = 0.0;
    let mut panels = 0usize;
    let whole = rule.integrate(a, b, &mut f);
    let mut stack = vec![(a, b, whole, 0u32)];
    while let Some((lo, hi, est, depth)) = stack.pop() {
        panels += 1;
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, &mut f);
        let right = rule.integrate(mid, hi, &mut f);
        let refined = left + right;
        let diff = (refined - est).abs();
        let budget = tol * ((hi - lo).abs() / width).max(1e-3);
        if diff <= budget || depth >= MAX_DEPTH || panels > MAX_PANELS {
            if diff > budget && (depth >= MAX_DEPTH || panels > MAX_PANELS) {
                return Err(NumericError::Quadrature {
                    achieved: error + diff,
                    requested: tol,
                });
            }
            value += refined;
            error += diff;
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    Ok(Quadrature { value, error })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_is_exact_for_polynomials() {
        let rule = GaussLegendre::new(10);
        // degree 19 is integrated exactly by a 10-point rule
        let v = rule.integrate(-1.0, 1.0, |x| x.powi(18));
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
        let w: f64 = rule.mapped(0.0, 3.0).map(|(_, w)| w).sum();
        assert!((w - 3.0).abs() < 1e-14);
    }

    #[test]
    fn high_order_rule_nodes_are_sorted_and_weights_positive() {
        let rule = GaussLegendre::new(64);
        let pts: Vec<_> = rule.mapped(-1.0, 1.0).collect();
        assert!(pts.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(pts.iter().all(|p| p.1 > 0.0));
    }

    #[test]
    fn adaptive_handles_peaked_integrands() {
        let q = adaptive(0.0, 10.0, 1e-12, |x| (-(x - 3.0).powi(2) / 2e-4).exp()).unwrap();
        let exact = (2.0 * PI * 1e-4).sqrt();
        assert!((q.value - exact).abs() < 1e-11, "{} vs {}", q.value, exact);
    }
}
