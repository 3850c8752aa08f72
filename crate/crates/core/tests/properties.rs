use std::f64::consts::PI;

use kslab::domain::{gauss_legendre, CartesianGrid, Point};
use kslab::geometry::ConformalFactor;
use kslab::potential::green_kernel;
use kslab::profiles::{mu_coulomb_identity, mu_potential_identity, ScaledCauchyProfile};
use kslab::sphere::StereographicMap;
use kslab::stationary::{least_squares, DensityField};
use kslab::virial::{critical_mass_rate, cutoff_profile};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = Point> {
    (-20.0..20.0f64, -20.0..20.0f64).prop_map(|(x, y)| Point::new(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rho_is_eight_pi_mu(lambda in 0.05..20.0f64, xs in point(), x in point()) {
        let rho = ScaledCauchyProfile::rho(lambda, xs).unwrap().eval(x);
        let mu = ScaledCauchyProfile::mu(lambda, xs).unwrap().eval(x);
        prop_assert!((rho - 8.0 * PI * mu).abs() <= 1e-13 * rho);
    }

    #[test]
    fn green_kernel_symmetric_and_log_scaling(x in point(), y in point(), s in 0.01..100.0f64) {
        prop_assume!(x.dist(y) > 1e-6);
        let a = green_kernel(x, y).unwrap();
        prop_assert_eq!(a, green_kernel(y, x).unwrap());
        let b = green_kernel(x * s, y * s).unwrap();
        prop_assert!((b - a + s.ln() / (2.0 * PI)).abs() < 1e-12 * (1.0 + a.abs()));
    }

    #[test]
    fn coincident_points_rejected(x in point()) {
        prop_assert!(green_kernel(x, x).is_err());
    }

    #[test]
    fn potential_identity_translates(lambda in 0.1..10.0f64, xs in point(), d in point(), shift in point()) {
        let a = mu_potential_identity(lambda, xs, xs + d);
        let b = mu_potential_identity(lambda, xs + shift, xs + shift + d);
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn coulomb_identity_log_shift(lambda in 0.01..100.0f64, s in 0.01..100.0f64) {
        let shift = mu_coulomb_identity(s * lambda) - mu_coulomb_identity(lambda);
        prop_assert!((shift + s.ln() / (2.0 * PI)).abs() < 1e-12);
    }

    #[test]
    fn stereographic_round_trip(lambda in 0.1..10.0f64, xs in point(), x in point()) {
        let map = StereographicMap::new(lambda, xs).unwrap();
        let (theta, psi) = map.to_sphere(x);
        prop_assert!(theta > -PI / 2.0 - 1e-15 && theta < PI / 2.0);
        let back = map.to_plane(theta, psi).unwrap();
        prop_assert!(back.dist(x) < 1e-9 * (1.0 + x.dist(xs)));
    }

    #[test]
    fn cutoff_in_unit_interval_and_monotone(radius in 0.5..50.0f64, a in 0.0..200.0f64, b in 0.0..200.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (vlo, vhi) = (cutoff_profile(lo, radius), cutoff_profile(hi, radius));
        prop_assert!((0.0..=1.0).contains(&vlo) && (0.0..=1.0).contains(&vhi));
        prop_assert!(vhi <= vlo);
    }

    #[test]
    fn critical_rate_vanishes_only_at_critical_mass(m in 0.1..100.0f64) {
        let rate = critical_mass_rate(m);
        prop_assert_eq!(rate > 0.0, m < 8.0 * PI);
    }

    #[test]
    fn least_squares_recovers_lines(slope in -10.0..10.0f64, icpt in -10.0..10.0f64, n in 3usize..40) {
        let pts: Vec<(f64, f64)> = (0..n).map(|i| (i as f64 * 0.7 - 3.0, slope * (i as f64 * 0.7 - 3.0) + icpt)).collect();
        let (s, c) = least_squares(&pts);
        prop_assert!((s - slope).abs() < 1e-9 && (c - icpt).abs() < 1e-9);
    }

    #[test]
    fn bicubic_reproduces_cubics(a in -1.0..1.0f64, b in -1.0..1.0f64, c in -1.0..1.0f64, p in point()) {
        let g = CartesianGrid::centered(25.0, 64).unwrap();
        let f = |q: Point| a * q.x.powi(3) + b * q.x * q.y * q.y + c * q.y + 1.0;
        let v = g.sample(f);
        if let Some(interp) = g.bicubic(&v, p) {
            prop_assert!((interp - f(p)).abs() < 1e-9 * (1.0 + f(p).abs()));
        }
    }

    #[test]
    fn scaling_is_linear_in_mass(s in 0.01..10.0f64) {
        let g = CartesianGrid::centered(5.0, 16).unwrap();
        let rho = DensityField::from_fn(g, ConformalFactor::Zero, |p| (-p.norm_sq()).exp()).unwrap();
        let scaled = rho.scaled(s).unwrap();
        prop_assert!((scaled.mass() - s * rho.mass()).abs() <= 1e-12 * s * rho.mass());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn gauss_legendre_integrates_polynomials(n in 2usize..40, k in 0usize..20) {
        prop_assume!(k < 2 * n);
        let (z, w) = gauss_legendre(n);
        let q: f64 = z.iter().zip(&w).map(|(z, w)| w * z.powi(k as i32)).sum();
        let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
        prop_assert!((q - exact).abs() < 1e-12);
    }

    #[test]
    fn density_on_grid_translates(dx in -5i32..5, dy in -5i32..5) {
        let g = CartesianGrid::centered(6.0, 32).unwrap();
        let h = g.spacing();
        let shift = Point::new(dx as f64 * h, dy as f64 * h);
        let moved = CartesianGrid::new(shift, 6.0, 32).unwrap();
        let a = ScaledCauchyProfile::rho(1.0, Point::ORIGIN).unwrap().density(&g, ConformalFactor::Zero);
        let b = ScaledCauchyProfile::rho(1.0, shift).unwrap().density(&moved, ConformalFactor::Zero);
        for (x, y) in a.samples().iter().zip(b.samples()) {
            prop_assert!((x - y).abs() <= 1e-12 * x);
        }
        prop_assert!((a.tail_mass() - b.tail_mass()).abs() < 1e-12);
    }
}
