use std::f64::consts::PI;

use heatlab::bessel::{bessel_i, leading_term};
use heatlab::cli::{format_number, parse_t_grid};
use heatlab::cone::{cone_heat_kernel, ConeKernelSpec};
use heatlab::mc::bridge_crossing_prob;
use heatlab::spectral::spectrum;
use heatlab::{Ball, Location, MulticoneDomain, Opening, Point, TruncatedCone};
use proptest::prelude::*;
use statrs::function::gamma::gamma;

fn arc_spec(len: f64) -> ConeKernelSpec {
    ConeKernelSpec::for_opening(&Opening::arc(0.0, len), Point::ORIGIN, 1e-13).unwrap()
}

/// Distance in units in the last place, for positive finite values.
fn ulps_apart(a: f64, b: f64) -> u64 {
    a.to_bits().abs_diff(b.to_bits())
}

fn polar(r: f64, th: f64) -> Point {
    Point::new2(r * th.cos(), r * th.sin())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn bessel_sandwich(nu in 0.0f64..20.0, z in 0.0f64..30.0) {
        let v = bessel_i(nu, z).unwrap();
        let low = leading_term(nu, z);
        let high = (0.5 * z).powf(nu) * z.exp() / gamma(1.0 + nu);
        prop_assert!(v >= low * (1.0 - 1e-13), "{v:e} < {low:e}");
        prop_assert!(v <= high * (1.0 + 1e-13), "{v:e} > {high:e}");
    }

    #[test]
    fn kernel_is_symmetric(
        len in 0.5f64..6.0,
        r1 in 0.2f64..3.0, f1 in 0.05f64..0.95,
        r2 in 0.2f64..3.0, f2 in 0.05f64..0.95,
        t in 0.25f64..4.0,
    ) {
        let spec = arc_spec(len);
        let x = polar(r1, f1 * len);
        let y = polar(r2, f2 * len);
        let a = cone_heat_kernel(&spec, t, &x, &y).unwrap();
        let b = cone_heat_kernel(&spec, t, &y, &x).unwrap();
        prop_assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn kernel_scaling(
        len in 0.5f64..6.0,
        r1 in 0.2f64..3.0, f1 in 0.05f64..0.95,
        r2 in 0.2f64..3.0, f2 in 0.05f64..0.95,
        t in 0.25f64..4.0,
        k in 0usize..3,
    ) {
        let lambda = [0.5, 2.0, 10.0][k];
        let spec = arc_spec(len);
        let x = polar(r1, f1 * len);
        let y = polar(r2, f2 * len);
        let a = cone_heat_kernel(&spec, t, &x, &y).unwrap();
        let b = cone_heat_kernel(&spec, t / (lambda * lambda), &(x * (1.0 / lambda)), &(y * (1.0 / lambda))).unwrap();
        let scaled = b.value / (lambda * lambda);
        let slack = a.error_bound + b.error_bound / (lambda * lambda) + 1e-9 * a.value.abs() + 1e-15;
        prop_assert!((a.value - scaled).abs() <= slack, "{} vs {}", a.value, scaled);
    }

    #[test]
    fn diagonal_kernel_decreases_in_time(len in 0.5f64..6.0, r in 0.2f64..3.0, f in 0.05f64..0.95) {
        let spec = arc_spec(len);
        let x = polar(r, f * len);
        let mut prev = f64::INFINITY;
        for i in 0..16 {
            let t = 0.05 * 1.6f64.powi(i);
            let p = cone_heat_kernel(&spec, t, &x, &x).unwrap().value;
            prop_assert!(p <= prev, "t = {t}: {p} > {prev}");
            prev = p;
        }
    }

    #[test]
    fn arc_exponents(len in 0.1f64..6.2) {
        let s = spectrum(&Opening::arc(0.0, len), 4).unwrap();
        prop_assert!(ulps_apart(s.beta / 2.0 + s.kappa / 2.0, 1.0 + s.alpha()) <= 4);
        prop_assert!((s.beta - s.kappa - 2.0).abs() <= 4.0 * f64::EPSILON * s.beta);
        prop_assert!(s.characters.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn wider_arc_has_smaller_ground_state(len in 0.1f64..6.0, extra in 0.01f64..0.25) {
        let a = spectrum(&Opening::arc(0.0, len), 1).unwrap();
        let b = spectrum(&Opening::arc(-extra, len), 1).unwrap();
        prop_assert!(b.eigenvalues[0] < a.eigenvalues[0]);
    }

    #[test]
    fn bridge_probability_is_a_probability(d1 in 0.0f64..10.0, d2 in 0.0f64..10.0, dt in 1e-6f64..10.0) {
        let q = bridge_crossing_prob(d1, d2, dt);
        prop_assert!((0.0..=1.0).contains(&q));
        prop_assert!(bridge_crossing_prob(d1, d2, dt / 2.0) <= q);
    }

    #[test]
    fn distance_never_exceeds_sampled_boundary(
        a in -PI..PI, len in 0.3f64..3.0,
        r in 0.0f64..5.0, th in -PI..PI,
    ) {
        let domain = MulticoneDomain::new(
            2,
            vec![Ball::new(Point::ORIGIN, 1.0)],
            vec![TruncatedCone::new(Point::ORIGIN, Opening::arc(a, a + len), 1.0)],
        );
        let x = polar(r, th);
        let loc = domain.classify(&x);
        prop_assume!(loc.tag != Location::Outside);
        let mut nearest = f64::INFINITY;
        let n = 4000;
        for i in 0..n {
            let phi = a + len + (2.0 * PI - len) * i as f64 / n as f64;
            nearest = nearest.min(x.distance(&polar(1.0, phi)));
            let s = 1.0 + 19.0 * i as f64 / n as f64;
            nearest = nearest.min(x.distance(&polar(s, a)));
            nearest = nearest.min(x.distance(&polar(s, a + len)));
        }
        prop_assert!(loc.distance <= nearest + 1e-12, "{} > {}", loc.distance, nearest);
    }

    #[test]
    fn classification_is_stable_inside(
        r in 0.0f64..5.0, th in -PI..PI, dr in -1.0f64..1.0, dth in -1.0f64..1.0,
    ) {
        let domain = MulticoneDomain::new(
            2,
            vec![Ball::new(Point::ORIGIN, 1.0)],
            vec![TruncatedCone::new(Point::ORIGIN, Opening::arc(-PI / 4.0, PI / 4.0), 1.0)],
        );
        let x = polar(r, th);
        let loc = domain.classify(&x);
        prop_assume!(loc.tag != Location::Outside && loc.distance > 1e-6);
        let eps = 0.999 * loc.distance;
        let y = x + Point::new2(dr, dth) * (eps / 2f64.sqrt());
        // crossing a glued base moves between core and branch but stays inside
        prop_assert!(domain.classify(&y).tag != Location::Outside);
    }

    #[test]
    fn formatted_numbers_round_trip(x in -1e20f64..1e20, e in -30i32..30) {
        let v = x * 10f64.powi(e);
        let s = format_number(v);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - v).abs() <= 1e-11 * v.abs());
    }

    #[test]
    fn geometric_grids(start in 0.01f64..100.0, factor in 1.01f64..10.0, count in 1usize..12) {
        let g = parse_t_grid(&format!("{start}:{factor}:{count}")).unwrap();
        prop_assert_eq!(g.len(), count);
        prop_assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn cap_exponents(colatitude in 0.3f64..2.8) {
        let s = spectrum(&Opening::polar_cap(colatitude), 1).unwrap();
        prop_assert!(ulps_apart(s.beta / 2.0 + s.kappa / 2.0, 1.0 + s.alpha()) <= 4);
        prop_assert!(s.eigenvalues[0] > 0.0);
    }
}
