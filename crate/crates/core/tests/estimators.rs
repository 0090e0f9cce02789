use std::f64::consts::PI;

use heatlab::mc::{
    estimate_kernel_at, estimate_survival, estimate_u, estimate_w, hitting_time_density, simulate_paths,
    SimConfig,
};
use heatlab::quadrature::adaptive;
use heatlab::spectral::spectrum;
use heatlab::{Ball, MulticoneDomain, Opening, Point, TruncatedCone};
use statrs::function::erf::erf;

fn half_plane(radius: f64) -> MulticoneDomain {
    MulticoneDomain::single_cone(TruncatedCone::new(Point::ORIGIN, Opening::arc(0.0, PI), radius))
}

fn two_quadrants() -> MulticoneDomain {
    MulticoneDomain::new(
        2,
        vec![Ball::new(Point::ORIGIN, 1.0)],
        vec![
            TruncatedCone::new(Point::ORIGIN, Opening::arc(-PI / 4.0, PI / 4.0), 1.0),
            TruncatedCone::new(Point::ORIGIN, Opening::arc(0.75 * PI, 1.25 * PI), 1.0),
        ],
    )
}

/// Harmonic in the truncated arc cone of unit radius, zero on its boundary:
/// `√(2/L)(r^α − r^{−α}) sin(α(θ − θ_a))`, `α = π/L`.
fn w_arc(start: f64, len: f64, x: &Point) -> f64 {
    let r = x.norm();
    let alpha = PI / len;
    let th = (x.0[1].atan2(x.0[0]) - start).rem_euclid(2.0 * PI);
    (2.0 / len).sqrt() * (r.powf(alpha) - r.powf(-alpha)) * (alpha * th).sin()
}

/// `P_x(T > t)` for the half-plane `x₂ > 0`.
fn half_plane_survival(x: &Point, t: f64) -> f64 {
    erf(x.0[1] / (2.0 * t).sqrt())
}

fn cfg(paths: u64, seed: u64) -> SimConfig {
    SimConfig {
        paths,
        seed,
        ..SimConfig::default()
    }
}

#[test]
fn survival_near_time_zero() {
    let e = simulate_paths(&half_plane(1e-6), Point::new2(0.0, 1.0), 1e-4, &cfg(20_000, 1)).unwrap();
    assert!(estimate_survival(&e.last()).unwrap().estimate >= 1.0 - 1e-3);
}

#[test]
fn survival_extremes_have_zero_error() {
    let e = simulate_paths(&half_plane(1e-6), Point::new2(0.0, 5.0), 1e-3, &cfg(1000, 1)).unwrap();
    let s = estimate_survival(&e.last()).unwrap();
    assert_eq!((s.estimate, s.std_error), (1.0, 0.0));
    let e = simulate_paths(&half_plane(1e-6), Point::new2(0.0, 1e-3), 100.0, &cfg(200, 1)).unwrap();
    let s = estimate_survival(&e.last()).unwrap();
    assert!(s.estimate < 0.05);
    let dead = SimConfig { dt: 1.0, ..cfg(200, 1) };
    let e = simulate_paths(&half_plane(1e-6), Point::new2(5.0, 1e-9), 1e6, &dead).unwrap();
    let s = estimate_survival(&e.last()).unwrap();
    assert_eq!((s.estimate, s.std_error), (0.0, 0.0));
}

#[test]
fn halving_the_step_stays_within_noise() {
    let d = half_plane(1e-6);
    let x = Point::new2(0.0, 1.0);
    let a = simulate_paths(&d, x, 1.0, &SimConfig { dt: 1e-2, ..cfg(1_000_000, 5) }).unwrap();
    let b = simulate_paths(&d, x, 1.0, &SimConfig { dt: 5e-3, ..cfg(1_000_000, 6) }).unwrap();
    let (a, b) = (estimate_survival(&a.last()).unwrap(), estimate_survival(&b.last()).unwrap());
    let joint = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.estimate - b.estimate).abs() < 3.0 * joint, "{a:?} {b:?}");
}

#[test]
fn kernel_estimate_at_reference_point() {
    let x = Point::new2(0.0, 1.0);
    let c = SimConfig {
        bandwidth: Some(0.05),
        ..cfg(1_000_000, 2)
    };
    let e = simulate_paths(&half_plane(1e-6), x, 1.0, &c).unwrap();
    let k = estimate_kernel_at(&e.last(), &x, Some(0.05)).unwrap();
    let want = (1.0 - (-2.0f64).exp()) / (2.0 * PI);
    assert!((k.estimate - want).abs() <= 3.0 * k.std_error + 0.02 * want, "{k:?} vs {want}");
}

#[test]
fn kernel_estimate_far_from_the_cloud() {
    let x = Point::new2(0.0, 1.0);
    let e = simulate_paths(&half_plane(1e-6), x, 1.0, &cfg(100_000, 3)).unwrap();
    let k = estimate_kernel_at(&e.last(), &Point::new2(30.0, 30.0), None).unwrap();
    assert!(k.estimate <= 3.0 * k.std_error);
}

#[test]
fn kernel_estimate_is_symmetric_in_start_and_end() {
    let d = half_plane(1e-6);
    let (x, y) = (Point::new2(0.0, 1.0), Point::new2(0.6, 1.4));
    let exy = simulate_paths(&d, x, 1.0, &cfg(400_000, 4)).unwrap();
    let eyx = simulate_paths(&d, y, 1.0, &cfg(400_000, 5)).unwrap();
    let a = estimate_kernel_at(&exy.last(), &y, Some(0.1)).unwrap();
    let b = estimate_kernel_at(&eyx.last(), &x, Some(0.1)).unwrap();
    let joint = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
    assert!((a.estimate - b.estimate).abs() <= 3.0 * joint, "{a:?} {b:?}");
}

#[test]
fn truncated_survival_is_below_full_half_plane() {
    let x = Point::new2(0.0, 2.0);
    let e = simulate_paths(&half_plane(1.0), x, 4.0, &SimConfig { dt: 0.05, ..cfg(200_000, 7) }).unwrap();
    let s = estimate_survival(&e.last()).unwrap();
    assert!(s.estimate <= half_plane_survival(&x, 4.0) + 3.0 * s.std_error);
}

#[test]
fn renormalized_survival_is_uniformly_bounded() {
    let d = half_plane(1e-6);
    let grid = [1.0, 4.0, 16.0];
    let c = SimConfig { dt: 0.05, ..cfg(50_000, 8) };
    let renorm = |x: Point, t: f64| {
        let e = simulate_paths(&d, x, t, &c).unwrap();
        estimate_survival(&e.last()).unwrap().estimate * t.sqrt() / x.norm()
    };
    let reference = grid
        .iter()
        .map(|&t| renorm(Point::new2(0.0, 1.0), t))
        .fold(0.0, f64::max);
    for x in [Point::new2(0.3, 0.5), Point::new2(-1.0, 1.5), Point::new2(2.0, 3.0)] {
        for t in [2.0, 8.0] {
            assert!(renorm(x, t) <= 1.5 * reference, "x = {x:?}, t = {t}");
        }
    }
}

/// Total mass of the hitting-time density over `(0, ∞)`.
fn hitting_mass(r: f64, mu: f64) -> f64 {
    let f = |t: f64| hitting_time_density(r, mu, t).unwrap();
    let head = adaptive(1e-12, 1.0, 1e-13, f).unwrap().value;
    head + adaptive(1.0, 2000.0, 1e-13, f).unwrap().value
}

#[test]
fn hitting_time_density_mass() {
    // drift toward zero: the hit is certain
    assert!((hitting_mass(1.0, -0.5) - 1.0).abs() < 1e-8);
    // drift away from zero: the hit has probability e^{-2μr}
    assert!((hitting_mass(1.0, 0.5) - (-1.0f64).exp()).abs() < 1e-8);
    assert!((hitting_mass(2.0, 0.25) - (-1.0f64).exp()).abs() < 1e-8);
}

#[test]
fn w_is_close_to_v_far_out() {
    let cone = TruncatedCone::new(Point::ORIGIN, Opening::arc(0.0, PI), 1.0);
    let spec = spectrum(&cone.opening, 1).unwrap();
    let x = Point::new2(30.0, 40.0);
    let w = estimate_w(&cone, &spec, &x, &cfg(20_000, 9)).unwrap();
    let v = (2.0 / PI).sqrt() * 40.0;
    let ratio = w.estimate / v;
    assert!((0.9..=1.0).contains(&ratio), "{ratio}");
}

#[test]
fn w_has_the_mean_value_property() {
    let cone = TruncatedCone::new(Point::ORIGIN, Opening::arc(0.0, PI), 1.0);
    let spec = spectrum(&cone.opening, 1).unwrap();
    for (k, center) in [Point::new2(0.0, 1.6), Point::new2(1.5, 1.0), Point::new2(-2.0, 0.8)]
        .into_iter()
        .enumerate()
    {
        let c = estimate_w(&cone, &spec, &center, &cfg(40_000, 100 + k as u64)).unwrap();
        let (mut mean, mut var) = (0.0, 0.0);
        let m = 8;
        for i in 0..m {
            let a = 2.0 * PI * i as f64 / m as f64;
            let p = center + Point::new2(a.cos(), a.sin()) * 0.3;
            let e = estimate_w(&cone, &spec, &p, &cfg(10_000, 200 + (k * m + i) as u64)).unwrap();
            mean += e.estimate / m as f64;
            var += e.std_error.powi(2) / (m * m) as f64;
        }
        let joint = (var + c.std_error.powi(2)).sqrt();
        // the circle average of a harmonic function equals the center value
        assert!((mean - c.estimate).abs() <= 3.0 * joint, "{center:?}: {mean} vs {c:?}");
    }
}

#[test]
fn u_equals_w_for_a_single_branch() {
    let d = half_plane(1.0);
    let c = SimConfig {
        stop_radius: Some(20.0),
        table_paths: 4000,
        ..cfg(20_000, 10)
    };
    for x in [
        Point::new2(0.0, 2.0),
        Point::new2(1.0, 1.0),
        Point::new2(-3.0, 0.5),
        Point::new2(4.0, 6.0),
        Point::new2(-0.5, 1.5),
    ] {
        let u = estimate_u(&d, 0, &x, &c).unwrap();
        let w = w_arc(0.0, PI, &x);
        let slack = 4.0 * u.ci.std_error + 4.0 * u.table_max_std_error + 0.01 * w;
        assert!((u.ci.estimate - w).abs() <= slack, "x = {x:?}: {u:?} vs {w}");
    }
}

#[test]
fn u_deep_in_its_branch_is_w() {
    let c = SimConfig {
        stop_radius: Some(1000.0),
        table_paths: 2000,
        ..cfg(5_000, 11)
    };
    let x = Point::new2(500.0, 0.0);
    let u = estimate_u(&two_quadrants(), 0, &x, &c).unwrap();
    let w = w_arc(-PI / 4.0, PI / 2.0, &x);
    let ratio = u.ci.estimate / w;
    assert!((0.95..=1.05).contains(&ratio), "{ratio}");
}

#[test]
fn u_decays_into_a_foreign_branch() {
    let c = SimConfig {
        stop_radius: Some(10.0),
        ..cfg(40_000, 12)
    };
    let d = two_quadrants();
    let values: Vec<f64> = [1.5, 3.0, 6.0]
        .iter()
        .map(|&r| estimate_u(&d, 0, &Point::new2(-r, 0.0), &c).unwrap().ci.estimate)
        .collect();
    assert!(values[0] > values[1] && values[1] > values[2], "{values:?}");
}
