//! Free energies, the logarithmic HLS deficit and the λ-scan of the Cauchy family.

use std::f64::consts::PI;

use serde::Serialize;

use crate::domain::{CartesianGrid, Point};
use crate::geometry::{laplacian_flat, ConformalFactor};
use crate::potential::{GreenOperator, PotentialMethod};
use crate::profiles::ScaledCauchyProfile;
use crate::stationary::{least_squares, DensityField};
use crate::{Error, Result, RHO_FLOOR};

#[derive(Clone, Debug, Serialize)]
pub struct EnergyReport {
    /// `∫ ρ ln ρ dA_φ`.
    pub entropy_term: f64,
    /// `∬ ρ G ρ dA_φ dA_φ`.
    pub coulomb_term: f64,
    /// `∬ κ_φ G ρ dA_φ dA_φ`.
    pub coupling_term: f64,
    pub q: f64,
    /// `entropy - ½ coulomb + q coupling`.
    pub total: f64,
    pub mass: f64,
    pub tail_mass: f64,
    /// Estimate of the neglected exterior contribution to `total`.
    pub truncation_bound: f64,
    pub floored_fraction: f64,
}

/// `F_{φ,q}(ρ) = ∫ ρ ln ρ dA_φ - ½ ∬ ρGρ + q ∬ κ_φ G ρ`.
pub fn free_energy(rho: &DensityField, q: f64, method: PotentialMethod) -> Result<EnergyReport> {
    let op = GreenOperator::new(rho.grid(), method);
    free_energy_with(&op, rho, q)
}

/// As [`free_energy`] with a prebuilt Green operator.
pub fn free_energy_with(op: &GreenOperator, rho: &DensityField, q: f64) -> Result<EnergyReport> {
    let grid = rho.grid();
    let s = rho.sources();
    let c = op.apply(&s);
    let h2 = grid.cell_area();
    let entropy_term = rho.entropy();
    let coulomb_term = s.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() * h2;
    // κ_φ e^{2φ} = Δ₀φ
    let coupling_term = if rho.phi().is_zero() {
        0.0
    } else {
        let lap = laplacian_flat(rho.phi_samples(), grid);
        lap.values.iter().zip(&c).map(|(k, c)| k * c).sum::<f64>() * h2
    };
    Ok(EnergyReport {
        entropy_term,
        coulomb_term,
        coupling_term,
        q,
        total: assemble(entropy_term, coulomb_term, coupling_term, q),
        mass: rho.mass(),
        tail_mass: rho.tail_mass(),
        truncation_bound: truncation_bound(rho),
        floored_fraction: rho.floored_fraction(),
    })
}

fn assemble(entropy: f64, coulomb: f64, coupling: f64, q: f64) -> f64 {
    entropy - 0.5 * coulomb + q * coupling
}

/// `m_tail (|ln ρ_edge| + 1 + (m/2π) ln H)` with `ρ_edge` the mean boundary-ring density.
fn truncation_bound(rho: &DensityField) -> f64 {
    let tail = rho.tail_mass();
    if tail == 0.0 {
        return 0.0;
    }
    let grid = rho.grid();
    let ring: Vec<f64> = (0..grid.len())
        .filter(|&k| {
            let (i, j) = grid.coords(k);
            grid.in_boundary_layer(i, j, 1)
        })
        .map(|k| rho.samples()[k])
        .collect();
    let edge = ring.iter().sum::<f64>() / ring.len() as f64;
    let log_edge = if edge > RHO_FLOOR { edge.ln().abs() } else { 0.0 };
    tail * (log_edge + 1.0 + rho.total_mass() / (2.0 * PI) * grid.half_width().ln().abs())
}

#[derive(Clone, Debug, Serialize)]
pub struct DeficitReport {
    /// `∫ ρ ln(ρ/(m μ^φ)) dA_φ`.
    pub lhs: f64,
    /// `(4π/m) ∬ (ρ - mμ^φ) G (ρ - mμ^φ)`.
    pub rhs: f64,
    pub deficit: f64,
    pub mass: f64,
    pub lambda: f64,
    pub x_star: Point,
}

/// Curved logarithmic HLS deficit against `m μ^φ_{λ,x⋆}` with `m` the total mass of `ρ`.
pub fn log_hls_deficit(rho: &DensityField, lambda: f64, x_star: Point, method: PotentialMethod) -> Result<DeficitReport> {
    let op = GreenOperator::new(rho.grid(), method);
    deficit_with(&op, rho, lambda, x_star)
}

fn deficit_with(op: &GreenOperator, rho: &DensityField, lambda: f64, x_star: Point) -> Result<DeficitReport> {
    let m = if rho.total_mass().is_finite() { rho.total_mass() } else { rho.mass() };
    if !(m > 0.0) {
        return Err(Error::Precondition("deficit needs positive mass".into()));
    }
    let grid = rho.grid();
    let mu = ScaledCauchyProfile::mu(lambda, x_star)?;
    let mu_s = grid.sample(|p| mu.eval(p));
    let h2 = grid.cell_area();
    let mut lhs = 0.0;
    let mut charge = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let r = rho.samples()[k];
        let e2 = (2.0 * rho.phi_samples()[k]).exp();
        let sigma = m * mu_s[k] / e2;
        if r > RHO_FLOOR {
            lhs += r * (r / sigma).ln() * e2;
        }
        charge.push((r - sigma) * e2);
    }
    lhs *= h2;
    let rhs = 4.0 * PI / m * op.coulomb_form(&charge, &charge);
    Ok(DeficitReport { lhs, rhs, deficit: lhs - rhs, mass: m, lambda, x_star })
}

/// Flat deficit of `ρ e^{2φ}` against `m μ`, assembled without reference to `φ`.
fn flat_deficit(op: &GreenOperator, rho: &DensityField, lambda: f64, x_star: Point) -> Result<DeficitReport> {
    let flat = DensityField::with_tail_mass(rho.grid().clone(), rho.sources(), ConformalFactor::Zero, rho.tail_mass())?;
    deficit_with(op, &flat, lambda, x_star)
}

#[derive(Clone, Debug, Serialize)]
pub struct CovarianceCheck {
    pub curved: DeficitReport,
    pub flat: DeficitReport,
    pub difference: f64,
}

/// The curved deficit of `ρ` against the flat deficit of `ρe^{2φ}`.
pub fn conformal_covariance_check(
    rho: &DensityField,
    lambda: f64,
    x_star: Point,
    method: PotentialMethod,
) -> Result<CovarianceCheck> {
    let op = GreenOperator::new(rho.grid(), method);
    let curved = deficit_with(&op, rho, lambda, x_star)?;
    let flat = if rho.phi().is_zero() { curved.clone() } else { flat_deficit(&op, rho, lambda, x_star)? };
    let difference = curved.deficit - flat.deficit;
    Ok(CovarianceCheck { curved, flat, difference })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ScanOptions {
    pub n: usize,
    /// Row half-width is at least `tail_ratio · λ`.
    pub tail_ratio: f64,
    /// Row half-width is at least `support_factor · (support radius + offset of the φ centre)`.
    pub support_factor: f64,
    pub method: PotentialMethod,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { n: 512, tail_ratio: 100.0, support_factor: 2.0, method: PotentialMethod::Auto }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub lambda: f64,
    pub free_energy: f64,
    /// `(m/4π)(m-8π) ln λ + m ln(m/π) - 2m + m²/8π - 2m ∫μφ`, with `∫μφ` by quadrature.
    pub predicted: f64,
    pub mu_phi: f64,
    pub half_width: f64,
    pub spacing: f64,
    pub tail_bound: f64,
    /// Set when `h > λ/2`.
    pub under_resolved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Plateau {
    pub mean: f64,
    pub spread: f64,
    pub small_lambda_value: f64,
    /// `8π ln(8/e) - 16π sup φ`.
    pub predicted_infimum: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LambdaScan {
    pub mass: f64,
    pub rows: Vec<ScanRow>,
    /// Least-squares slope of `F` against `ln λ`.
    pub slope: f64,
    pub intercept: f64,
    pub predicted_slope: f64,
    pub sup_phi: f64,
    /// Present for `m = 8π`.
    pub plateau: Option<Plateau>,
}

/// `F_φ(m μ_{λ,x⋆} e^{-2φ})` along `lambdas`, each row on a grid centred at `x⋆` and scaled with `λ`.
pub fn lambda_scan(
    m: f64,
    phi: &ConformalFactor,
    x_star: Point,
    lambdas: &[f64],
    opts: &ScanOptions,
) -> Result<LambdaScan> {
    if !(m > 0.0) {
        return Err(Error::InvalidParameter(format!("mass {m} must be positive")));
    }
    if lambdas.len() < 2 {
        return Err(Error::InvalidParameter("scan needs at least two scales".into()));
    }
    let (lo, hi) = lambdas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
    if !(lo > 0.0) || hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter("scales must be positive and span two decades".into()));
    }
    let reach = phi.center().map_or(0.0, |c| c.dist(x_star)) + phi.support_radius();
    let mut sup_phi: f64 = 0.0;
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let hw = (opts.tail_ratio * lambda).max(opts.support_factor * reach);
            let grid = CartesianGrid::new(x_star, hw, opts.n)?;
            let profile = ScaledCauchyProfile::mu(lambda, x_star)?;
            let rho = profile.curved_density(&grid, phi.clone(), m);
            let rep = free_energy(&rho, 0.0, opts.method)?;
            let mu_s = grid.sample(|p| profile.eval(p));
            let mu_phi = mu_s.iter().zip(rho.phi_samples()).map(|(a, b)| a * b).sum::<f64>() * grid.cell_area();
            sup_phi = sup_phi.max(rho.phi_samples().iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)));
            Ok(ScanRow {
                lambda,
                free_energy: rep.total,
                predicted: m / (4.0 * PI) * (m - 8.0 * PI) * lambda.ln() + m * (m / PI).ln() - 2.0 * m
                    + m * m / (8.0 * PI)
                    - 2.0 * m * mu_phi,
                mu_phi,
                half_width: hw,
                spacing: grid.spacing(),
                tail_bound: rep.truncation_bound,
                under_resolved: grid.spacing() > 0.5 * lambda,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda.ln(), r.free_energy)).collect();
    let (slope, intercept) = least_squares(&pts);
    let critical = ((m - 8.0 * PI) / (8.0 * PI)).abs() < 1e-6;
    let plateau = critical.then(|| {
        let values: Vec<f64> = rows.iter().map(|r| r.free_energy).collect();
        let (mn, mx) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let small = rows.iter().min_by(|a, b| a.lambda.total_cmp(&b.lambda)).map(|r| r.free_energy).unwrap_or(f64::NAN);
        Plateau {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            spread: mx - mn,
            small_lambda_value: small,
            predicted_infimum: 8.0 * PI * (8.0 / std::f64::consts::E).ln() - 16.0 * PI * sup_phi,
        }
    });
    Ok(LambdaScan { mass: m, rows, slope, intercept, predicted_slope: m / (4.0 * PI) * (m - 8.0 * PI), sup_phi, plateau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{check_entropy_identity, mu_entropy_identity};

    #[test]
    fn assembly_identity() {
        let g = CartesianGrid::centered(6.0, 64).unwrap();
        let phi = ConformalFactor::radial_bump(0.2, 2.0, Point::ORIGIN).unwrap();
        let rho = DensityField::from_fn(g, phi, |p| (-p.norm_sq() / 2.0).exp()).unwrap();
        let r = free_energy(&rho, 1.7, PotentialMethod::Auto).unwrap();
        assert_eq!(r.total, r.entropy_term - 0.5 * r.coulomb_term + r.q * r.coupling_term);
        assert!(r.coupling_term != 0.0);
    }

    #[test]
    fn flat_free_energy_plateau() {
        for lambda in [0.5, 1.0, 2.0] {
            let g = CartesianGrid::centered(100.0 * lambda, 512).unwrap();
            let rho = ScaledCauchyProfile::rho(lambda, Point::ORIGIN).unwrap().density(&g, ConformalFactor::Zero);
            let f = free_energy(&rho, 0.0, PotentialMethod::Auto).unwrap();
            let target = 8.0 * PI * (8.0 / std::f64::consts::E).ln();
            assert!((f.total - target).abs() < 0.3, "{}", f.total);
        }
    }

    #[test]
    fn entropy_term_matches_identity() {
        let g = CartesianGrid::centered(300.0, 1024).unwrap();
        let m = 4.0 * PI;
        let rho = ScaledCauchyProfile::mu(1.0, Point::ORIGIN).unwrap().curved_density(&g, ConformalFactor::Zero, m);
        let f = free_energy(&rho, 0.0, PotentialMethod::Auto).unwrap();
        let exact = mu_entropy_identity(m, 1.0);
        assert!((f.entropy_term - exact).abs() < 1e-2 * exact.abs());
        let check = check_entropy_identity(m, 1.0, Point::ORIGIN, &g).unwrap();
        assert!((check.numeric - f.entropy_term).abs() < 1e-9);
    }

    #[test]
    fn deficit_cases() {
        let g = CartesianGrid::centered(30.0, 256).unwrap();
        let phi = ConformalFactor::radial_bump(0.1, 2.0, Point::new(0.5, 0.0)).unwrap();
        let m = 8.0 * PI;
        let exact = ScaledCauchyProfile::mu(1.0, Point::ORIGIN).unwrap().curved_density(&g, phi.clone(), m);
        let d = log_hls_deficit(&exact, 1.0, Point::ORIGIN, PotentialMethod::Auto).unwrap();
        assert!(d.deficit.abs() < 2e-2, "{}", d.deficit);
        let a = ScaledCauchyProfile::mu(1.0, Point::new(3.0, 0.0)).unwrap();
        let b = ScaledCauchyProfile::mu(1.0, Point::new(-3.0, 0.0)).unwrap();
        let split = DensityField::from_fn(g.clone(), ConformalFactor::Zero, |p| 0.5 * m * (a.eval(p) + b.eval(p))).unwrap();
        let d = log_hls_deficit(&split, 1.0, Point::ORIGIN, PotentialMethod::Auto).unwrap();
        assert!(d.deficit > 0.1, "{}", d.deficit);
        let gauss = DensityField::from_fn(g, ConformalFactor::Zero, |p| m / (2.0 * PI) * (-p.norm_sq() / 2.0).exp()).unwrap();
        let d = log_hls_deficit(&gauss, 1.0, Point::ORIGIN, PotentialMethod::Auto).unwrap();
        assert!(d.deficit > 0.1, "{}", d.deficit);
    }

    #[test]
    fn covariance_and_translation() {
        let g = CartesianGrid::centered(12.0, 128).unwrap();
        let phi = ConformalFactor::radial_bump(0.2, 3.0, Point::new(1.0, 0.0)).unwrap();
        let rho = DensityField::from_fn(g, phi.clone(), |p| {
            (-(p - Point::new(1.0, 1.0)).norm_sq()).exp() + 0.5 * (-(p + Point::new(2.0, 0.0)).norm_sq() / 3.0).exp()
        })
        .unwrap();
        let c = conformal_covariance_check(&rho, 1.3, Point::new(0.5, 0.0), PotentialMethod::Auto).unwrap();
        assert!(c.difference.abs() <= 1e-8, "{}", c.difference);
        let flat = rho.with_phi(ConformalFactor::Zero).unwrap();
        let c0 = conformal_covariance_check(&flat, 1.3, Point::ORIGIN, PotentialMethod::Auto).unwrap();
        assert_eq!(c0.difference, 0.0);

        // translate ρ, φ, x⋆ and the grid by a whole number of cells
        let shift = Point::new(2.0 * g_spacing(&rho), -3.0 * g_spacing(&rho));
        let g2 = CartesianGrid::new(rho.grid().center() + shift, rho.grid().half_width(), rho.grid().n()).unwrap();
        let phi2 = ConformalFactor::radial_bump(0.2, 3.0, Point::new(1.0, 0.0) + shift).unwrap();
        let rho2 = DensityField::from_fn(g2, phi2, |p| {
            let p = p - shift;
            (-(p - Point::new(1.0, 1.0)).norm_sq()).exp() + 0.5 * (-(p + Point::new(2.0, 0.0)).norm_sq() / 3.0).exp()
        })
        .unwrap();
        let a = log_hls_deficit(&rho, 1.3, Point::new(0.5, 0.0), PotentialMethod::Auto).unwrap();
        let b = log_hls_deficit(&rho2, 1.3, Point::new(0.5, 0.0) + shift, PotentialMethod::Auto).unwrap();
        assert!((a.deficit - b.deficit).abs() < 1e-6);
    }

    fn g_spacing(rho: &DensityField) -> f64 {
        rho.grid().spacing()
    }

    #[test]
    fn subcritical_scan_slope() {
        let lambdas = [0.01, 0.03, 0.1, 0.3, 1.0];
        let opts = ScanOptions { n: 256, tail_ratio: 60.0, ..Default::default() };
        let scan = lambda_scan(4.0 * PI, &ConformalFactor::Zero, Point::ORIGIN, &lambdas, &opts).unwrap();
        assert!((scan.slope / scan.predicted_slope - 1.0).abs() < 0.05, "{}", scan.slope);
        assert!(scan.plateau.is_none());
        assert!(lambda_scan(4.0 * PI, &ConformalFactor::Zero, Point::ORIGIN, &[0.1, 1.0], &opts).is_err());
    }
}
