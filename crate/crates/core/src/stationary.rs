//! Densities, stationary residuals, decay envelopes and configuration-space membership.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::{AnnulusSpec, CartesianGrid, Point};
use crate::geometry::{bump, grad_flat, ConformalFactor};
use crate::potential::{newtonian_potential, PotentialMethod};
use crate::{Error, Result, RHO_FLOOR};

/// Samples of `ρ ≥ 0` on a grid, together with the conformal factor defining `dA_φ`.
#[derive(Clone, Debug)]
pub struct DensityField {
    grid: CartesianGrid,
    samples: Vec<f64>,
    phi: ConformalFactor,
    phi_samples: Vec<f64>,
    mass: f64,
    tail_mass: f64,
}

impl DensityField {
    /// Wraps samples; the exterior mass is estimated from a power-law fit of the outer annulus.
    pub fn new(grid: CartesianGrid, samples: Vec<f64>, phi: ConformalFactor) -> Result<Self> {
        let mut d = Self::with_tail_mass(grid, samples, phi, 0.0)?;
        d.tail_mass = d.estimate_tail_mass();
        Ok(d)
    }

    /// Wraps samples with a known exterior mass.
    pub fn with_tail_mass(grid: CartesianGrid, samples: Vec<f64>, phi: ConformalFactor, tail_mass: f64) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} density samples for {} cells",
                samples.len(),
                grid.len()
            )));
        }
        if let Some(v) = samples.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("density sample {v} is negative or not finite")));
        }
        let phi_samples = phi.sample(&grid);
        let h2 = grid.cell_area();
        let mass = samples.iter().zip(&phi_samples).map(|(r, p)| r * (2.0 * p).exp()).sum::<f64>() * h2;
        Ok(Self { grid, samples, phi, phi_samples, mass, tail_mass })
    }

    pub fn from_fn(grid: CartesianGrid, phi: ConformalFactor, f: impl Fn(Point) -> f64 + Sync) -> Result<Self> {
        let samples = grid.sample(f);
        Self::new(grid, samples, phi)
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn phi(&self) -> &ConformalFactor {
        &self.phi
    }

    /// `φ` at the cell centres.
    pub fn phi_samples(&self) -> &[f64] {
        &self.phi_samples
    }

    /// `e^{2φ}h²` per cell.
    pub fn area_weights(&self) -> Vec<f64> {
        let h2 = self.grid.cell_area();
        self.phi_samples.iter().map(|p| (2.0 * p).exp() * h2).collect()
    }

    /// Flat-area source `ρ e^{2φ}` per cell.
    pub fn sources(&self) -> Vec<f64> {
        self.samples.iter().zip(&self.phi_samples).map(|(r, p)| r * (2.0 * p).exp()).collect()
    }

    /// Grid mass `Σ ρ e^{2φ} h²`.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Mass outside the grid (possibly infinite).
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn total_mass(&self) -> f64 {
        self.mass + self.tail_mass
    }

    /// `∫ ρ ln ρ dA_φ` over the grid.
    pub fn entropy(&self) -> f64 {
        self.weighted_sum(|r| if r > RHO_FLOOR { r * r.ln() } else { 0.0 })
    }

    /// `∫ ρ |ln ρ| dA_φ` over the grid.
    pub fn abs_entropy(&self) -> f64 {
        self.weighted_sum(|r| if r > RHO_FLOOR { (r * r.ln()).abs() } else { 0.0 })
    }

    fn weighted_sum(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.samples.iter().zip(&self.phi_samples).map(|(&r, p)| f(r) * (2.0 * p).exp()).sum::<f64>()
            * self.grid.cell_area()
    }

    /// Fraction of cells below the floor.
    pub fn floored_fraction(&self) -> f64 {
        self.samples.iter().filter(|&&r| r < RHO_FLOOR).count() as f64 / self.samples.len() as f64
    }

    /// `s ρ` with the same `φ`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let samples = self.samples.iter().map(|r| s * r).collect();
        Self::with_tail_mass(self.grid.clone(), samples, self.phi.clone(), s * self.tail_mass)
    }

    /// Replaces the samples, keeping grid and `φ`; the tail is re-estimated.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Self> {
        let mut d = Self::with_tail_mass(self.grid.clone(), samples, self.phi.clone(), 0.0)?;
        d.tail_mass = d.estimate_tail_mass();
        Ok(d)
    }

    /// Replaces the conformal factor, keeping samples and tail mass.
    pub fn with_phi(&self, phi: ConformalFactor) -> Result<Self> {
        Self::with_tail_mass(self.grid.clone(), self.samples.clone(), phi, self.tail_mass)
    }

    /// Fits `ln ρ = a + p ln r` on the outer half of the inscribed disc and integrates
    /// `e^a r^p` over the exterior of the grid. Infinite when `p ≥ -2`.
    fn estimate_tail_mass(&self) -> f64 {
        match power_law_fit(self, self.grid.center()) {
            Fit::Vanishing => 0.0,
            Fit::PowerLaw { log_a, slope } if slope < -2.0 => {
                let a = log_a.exp();
                self.grid.exterior_angular_integral(self.grid.center(), |r| a * r.powf(slope + 2.0) / (-slope - 2.0))
            }
            Fit::PowerLaw { .. } => f64::INFINITY,
        }
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(["x", "y", "rho"])?;
        for (p, r) in self.grid.points().zip(&self.samples) {
            w.serialize((p.x, p.y, r))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Loads `x,y,rho` rows describing a full uniform grid.
    pub fn from_csv(path: impl AsRef<Path>, phi: ConformalFactor) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let rows = rdr.deserialize::<(f64, f64, f64)>().collect::<std::result::Result<Vec<_>, _>>()?;
        let (grid, samples) = crate::geometry::grid_from_rows(&rows)?;
        Self::new(grid, samples, phi)
    }
}

enum Fit {
    Vanishing,
    PowerLaw { log_a: f64, slope: f64 },
}

fn power_law_fit(rho: &DensityField, origin: Point) -> Fit {
    let outer = rho.grid.inscribed_radius_about(origin);
    let mut pts = Vec::new();
    let mut total = 0;
    for (p, &v) in rho.grid.points().zip(&rho.samples) {
        let r = p.dist(origin);
        if r >= 0.5 * outer && r <= outer {
            total += 1;
            if v >= RHO_FLOOR {
                pts.push((r.ln(), v.ln()));
            }
        }
    }
    if pts.len() < 8 || pts.len() * 2 < total {
        return Fit::Vanishing;
    }
    let (slope, log_a) = least_squares(&pts);
    Fit::PowerLaw { log_a, slope }
}

/// Slope and intercept of the least-squares line through `(x, y)` pairs.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResidualOptions {
    /// f statistics use the disc of radius `interior_fraction · half_width` about the grid centre.
    pub interior_fraction: f64,
    pub method: PotentialMethod,
    /// Seed of the standard test bank.
    pub seed: u64,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        Self { interior_fraction: 0.5, method: PotentialMethod::Auto, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    /// `(Σ ρ |∇f|² h²)^{1/2}` over the interior, `f = ln ρ - c`.
    pub reduced_residual_l2: f64,
    pub f_constant: f64,
    pub f_variation: f64,
    /// Weak residual of the static equation against the standard test bank.
    pub static_residual_l2: f64,
    /// Cells excluded from the f statistics.
    #[serde(skip)]
    pub boundary_mask: Vec<bool>,
    pub interior_cells: usize,
    pub mass: f64,
    pub tail_mass: f64,
}

pub fn reduced_residual(rho: &DensityField, opts: &ResidualOptions) -> Result<ResidualReport> {
    let grid = rho.grid();
    let c = newtonian_potential(rho, opts.method);
    let valid: Vec<bool> = rho.samples().iter().map(|&r| r >= RHO_FLOOR).collect();
    if !valid.iter().any(|&v| v) {
        return Err(Error::AllMasked);
    }
    let f: Vec<f64> =
        rho.samples().iter().zip(&c.samples).map(|(&r, &c)| if r >= RHO_FLOOR { r.ln() - c } else { 0.0 }).collect();
    let n = grid.n();
    let radius = opts.interior_fraction * grid.half_width();
    let interior: Vec<bool> = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            !grid.in_boundary_layer(i, j, 1)
                && grid.point(k).dist(grid.center()) <= radius
                && [k, k - 1, k + 1, k - n, k + n].iter().all(|&q| valid[q])
        })
        .collect();
    let count = interior.iter().filter(|&&b| b).count();
    if count == 0 {
        return Err(Error::AllMasked);
    }
    let grad = grad_flat(&f, grid);
    let (mut sum, mut mean, mut max, mut min) = (0.0, 0.0, f64::NEG_INFINITY, f64::INFINITY);
    for k in (0..grid.len()).filter(|&k| interior[k]) {
        sum += rho.samples()[k] * (grad.x[k].powi(2) + grad.y[k].powi(2));
        mean += f[k];
        max = max.max(f[k]);
        min = min.min(f[k]);
    }
    let bank = TestBank::standard(grid, opts.seed);
    let static_residual_l2 = weak_residual_with(rho, &c.samples, &bank)?;
    Ok(ResidualReport {
        reduced_residual_l2: (sum * grid.cell_area()).sqrt(),
        f_constant: mean / count as f64,
        f_variation: max - min,
        static_residual_l2,
        boundary_mask: interior.iter().map(|b| !b).collect(),
        interior_cells: count,
        mass: rho.mass(),
        tail_mass: rho.tail_mass(),
    })
}

/// Compactly supported test fields on one grid.
#[derive(Clone, Debug)]
pub struct TestBank {
    grid: CartesianGrid,
    fields: Vec<Vec<f64>>,
}

impl TestBank {
    /// Tensor-product bumps at 3 scales and 9 jittered positions.
    pub fn standard(grid: &CartesianGrid, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hw = grid.half_width();
        let c = grid.center();
        let mut fields = Vec::with_capacity(27);
        for scale in [0.12, 0.2, 0.3] {
            for a in [-0.35, 0.0, 0.35] {
                for b in [-0.35, 0.0, 0.35] {
                    let x0 = c.x + hw * (a + rng.gen_range(-0.03..0.03));
                    let y0 = c.y + hw * (b + rng.gen_range(-0.03..0.03));
                    let s = scale * hw;
                    fields.push(grid.sample(|p| bump((p.x - x0) / s) * bump((p.y - y0) / s)));
                }
            }
        }
        Self { grid: grid.clone(), fields }
    }

    pub fn from_fields(grid: &CartesianGrid, fields: Vec<Vec<f64>>) -> Result<Self> {
        if fields.iter().any(|f| f.len() != grid.len()) {
            return Err(Error::InvalidParameter("test field size does not match the grid".into()));
        }
        Ok(Self { grid: grid.clone(), fields })
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    fn check_support(&self) -> Result<()> {
        for (t, f) in self.fields.iter().enumerate() {
            let touches = (0..self.grid.len()).any(|k| {
                let (i, j) = self.grid.coords(k);
                self.grid.in_boundary_layer(i, j, 2) && f[k] != 0.0
            });
            if touches {
                return Err(Error::Precondition(format!("test field {t} does not vanish near the boundary")));
            }
        }
        Ok(())
    }
}

/// `max_ψ |Σ ∇ψ·(∇ρ - ρ∇c) h²| / ‖∇ψ‖` over the bank.
pub fn static_weak_residual(rho: &DensityField, bank: &TestBank, method: PotentialMethod) -> Result<f64> {
    let c = newtonian_potential(rho, method);
    weak_residual_with(rho, &c.samples, bank)
}

fn weak_residual_with(rho: &DensityField, c: &[f64], bank: &TestBank) -> Result<f64> {
    if bank.grid != *rho.grid() {
        return Err(Error::InvalidParameter("test bank and density live on different grids".into()));
    }
    bank.check_support()?;
    let grid = rho.grid();
    let gr = grad_flat(rho.samples(), grid);
    let gc = grad_flat(c, grid);
    let r = rho.samples();
    let qx: Vec<f64> = (0..grid.len()).map(|k| gr.x[k] - r[k] * gc.x[k]).collect();
    let qy: Vec<f64> = (0..grid.len()).map(|k| gr.y[k] - r[k] * gc.y[k]).collect();
    let residuals = bank.fields.iter().map(|psi| {
        let gp = grad_flat(psi, grid);
        let energy: f64 = gp.x.iter().zip(&gp.y).map(|(a, b)| a * a + b * b).sum::<f64>() * grid.cell_area();
        if energy == 0.0 {
            return 0.0;
        }
        let pairing: f64 = (0..grid.len()).map(|k| gp.x[k] * qx[k] + gp.y[k] * qy[k]).sum::<f64>() * grid.cell_area();
        pairing.abs() / energy.sqrt()
    });
    Ok(residuals.fold(0.0, f64::max))
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthReport {
    pub constant: f64,
    pub checked_cells: usize,
    pub failed_cells: usize,
    pub pass: bool,
    /// Per-cell failure flags (only cells with `r ≥ C` can fail).
    #[serde(skip)]
    pub violations: Vec<bool>,
}

/// Checks `ρ ≤ C r^{C r²}` for `|x| ≥ C`, in logarithmic form.
pub fn growth_condition_check(rho: &DensityField, constant: f64) -> Result<GrowthReport> {
    if !(constant > 0.0 && constant.is_finite()) {
        return Err(Error::InvalidParameter(format!("growth constant {constant} must be positive")));
    }
    let mut checked = 0;
    let violations: Vec<bool> = rho
        .grid()
        .points()
        .zip(rho.samples())
        .map(|(p, &v)| {
            let r = p.norm();
            if r < constant {
                return false;
            }
            checked += 1;
            v > 0.0 && v.ln() > constant.ln() + constant * r * r * r.ln()
        })
        .collect();
    let failed = violations.iter().filter(|&&b| b).count();
    Ok(GrowthReport { constant, checked_cells: checked, failed_cells: failed, pass: failed == 0, violations })
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeReport {
    /// Smallest `K ≥ 1` with `K ≥ ρ(1+r²)^{m/4π} ≥ 1/K` on the annulus.
    pub k_best: f64,
    /// Least-squares slope of `ln ρ` against `ln r` on the annulus.
    pub tail_slope: f64,
    /// `-m/2π`.
    pub predicted_slope: f64,
    pub mass_used: f64,
    pub cells: usize,
    pub inner_radius: f64,
    pub outer_radius: f64,
}

pub fn decay_envelope(rho: &DensityField, annulus: &AnnulusSpec) -> Result<EnvelopeReport> {
    annulus.check_inside(rho.grid())?;
    let m = if rho.total_mass().is_finite() { rho.total_mass() } else { rho.mass() };
    let exponent = m / (4.0 * PI);
    let mut pts = Vec::new();
    let (mut vmax, mut vmin) = (f64::NEG_INFINITY, f64::INFINITY);
    for (p, &v) in rho.grid().points().zip(rho.samples()) {
        let r = p.norm();
        if !annulus.contains(r) {
            continue;
        }
        if v < RHO_FLOOR {
            return Err(Error::Precondition(format!("annulus touches a masked cell at r = {r:.3}")));
        }
        let e = v * (1.0 + r * r).powf(exponent);
        vmax = vmax.max(e);
        vmin = vmin.min(e);
        pts.push((r.ln(), v.ln()));
    }
    if pts.len() < 2 {
        return Err(Error::OutsideGrid("annulus contains fewer than two cells".into()));
    }
    let (slope, _) = least_squares(&pts);
    Ok(EnvelopeReport {
        k_best: 1f64.max(vmax).max(1.0 / vmin),
        tail_slope: slope,
        predicted_slope: -m / (2.0 * PI),
        mass_used: m,
        cells: pts.len(),
        inner_radius: annulus.inner(),
        outer_radius: annulus.outer(),
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MembershipOptions {
    /// Largest tolerated fraction of cells below the floor.
    pub max_zero_fraction: f64,
}

impl Default for MembershipOptions {
    fn default() -> Self {
        Self { max_zero_fraction: 0.25 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MembershipReport {
    pub zero_fraction: f64,
    pub mass: f64,
    pub tail_mass: f64,
    pub entropy: f64,
    pub positive: bool,
    pub mass_finite: bool,
    pub entropy_finite: bool,
    pub tail_finite: bool,
    pub pass: bool,
    pub reasons: Vec<String>,
}

pub fn membership_check(rho: &DensityField, opts: &MembershipOptions) -> MembershipReport {
    let zero_fraction = rho.floored_fraction();
    let mass = rho.mass();
    let entropy = rho.abs_entropy();
    let positive = zero_fraction <= opts.max_zero_fraction;
    let mass_finite = mass.is_finite() && mass > 0.0;
    let entropy_finite = entropy.is_finite();
    let tail_finite = rho.tail_mass().is_finite();
    let mut reasons = Vec::new();
    if !positive {
        reasons.push(format!("{:.1}% of cells vanish", 100.0 * zero_fraction));
    }
    if !mass_finite {
        reasons.push(format!("mass {mass} is not finite and positive"));
    }
    if !entropy_finite {
        reasons.push("entropy is not finite".into());
    }
    if !tail_finite {
        reasons.push("decay too slow for a finite exterior mass".into());
    }
    MembershipReport {
        zero_fraction,
        mass,
        tail_mass: rho.tail_mass(),
        entropy,
        positive,
        mass_finite,
        entropy_finite,
        tail_finite,
        pass: reasons.is_empty(),
        reasons,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::ScaledCauchyProfile;

    fn flat_solution(lambda: f64, center: Point, hw: f64, n: usize) -> DensityField {
        let g = CartesianGrid::new(center, hw, n).unwrap();
        ScaledCauchyProfile::rho(lambda, center).unwrap().density(&g, ConformalFactor::Zero)
    }

    #[test]
    fn rejects_bad_samples() {
        let g = CartesianGrid::centered(1.0, 8).unwrap();
        assert!(DensityField::new(g.clone(), vec![-1.0; 64], ConformalFactor::Zero).is_err());
        assert!(DensityField::new(g.clone(), vec![f64::NAN; 64], ConformalFactor::Zero).is_err());
        assert!(DensityField::new(g, vec![1.0; 10], ConformalFactor::Zero).is_err());
    }

    #[test]
    fn tail_estimate_for_power_law() {
        let rho = flat_solution(1.0, Point::ORIGIN, 40.0, 256);
        let exact = rho.tail_mass();
        let est = DensityField::new(rho.grid().clone(), rho.samples().to_vec(), ConformalFactor::Zero).unwrap();
        assert!((est.tail_mass() - exact).abs() < 0.05 * exact, "{} {}", est.tail_mass(), exact);
        assert!((rho.total_mass() - 8.0 * PI).abs() < 1e-3);
    }

    #[test]
    fn residual_of_flat_solution() {
        for (lambda, center) in [(1.0, Point::ORIGIN), (2.0, Point::new(3.0, -2.0))] {
            let rho = flat_solution(lambda, center, 40.0 * lambda, 512);
            let rep = reduced_residual(&rho, &ResidualOptions::default()).unwrap();
            let expected = 8f64.ln() + 2.0 * lambda.ln();
            assert!((rep.f_constant - expected).abs() < 0.03, "{}", rep.f_constant);
            assert!(rep.f_variation < 0.01, "{}", rep.f_variation);
            assert!(rep.static_residual_l2 < 2e-2, "{}", rep.static_residual_l2);
        }
    }

    #[test]
    fn residual_detects_non_solutions() {
        let g = CartesianGrid::centered(10.0, 128).unwrap();
        let gauss = DensityField::from_fn(g.clone(), ConformalFactor::Zero, |p| 4.0 * (-p.norm_sq()).exp()).unwrap();
        let rep = reduced_residual(&gauss, &ResidualOptions::default()).unwrap();
        assert!(rep.f_variation > 0.5);

        let g = CartesianGrid::centered(20.0, 256).unwrap();
        let phi = ConformalFactor::radial_bump(0.3, 2.0, Point::ORIGIN).unwrap();
        let curved = ScaledCauchyProfile::rho(1.0, Point::ORIGIN).unwrap().curved_density(&g, phi.clone(), 8.0 * PI);
        let rep = reduced_residual(&curved, &ResidualOptions::default()).unwrap();
        // ∇f = -2∇φ for this density
        let expected: f64 = g
            .points()
            .zip(curved.samples())
            .map(|(p, r)| r * 4.0 * phi.gradient(p).norm_sq())
            .sum::<f64>()
            * g.cell_area();
        assert!((rep.reduced_residual_l2 / expected.sqrt() - 1.0).abs() < 0.1);
    }

    #[test]
    fn all_masked_is_an_error() {
        let g = CartesianGrid::centered(1.0, 16).unwrap();
        let z = DensityField::new(g, vec![0.0; 256], ConformalFactor::Zero).unwrap();
        assert!(matches!(reduced_residual(&z, &ResidualOptions::default()), Err(Error::AllMasked)));
    }

    #[test]
    fn weak_residual_grows_with_noise() {
        let rho = flat_solution(1.0, Point::ORIGIN, 20.0, 128);
        let bank = TestBank::standard(rho.grid(), 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let noise: Vec<f64> = (0..rho.grid().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = [0.0, 0.01, 0.02, 0.04]
            .iter()
            .map(|&a| {
                let s = rho.samples().iter().zip(&noise).map(|(r, e)| r * (1.0 + a * e)).collect();
                static_weak_residual(&rho.with_samples(s).unwrap(), &bank, PotentialMethod::Auto).unwrap()
            })
            .collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]), "{values:?}");
        let zero = TestBank::from_fields(rho.grid(), vec![vec![0.0; rho.grid().len()]]).unwrap();
        assert_eq!(static_weak_residual(&rho, &zero, PotentialMethod::Auto).unwrap(), 0.0);
        let wide = TestBank::from_fields(rho.grid(), vec![vec![1.0; rho.grid().len()]]).unwrap();
        assert!(static_weak_residual(&rho, &wide, PotentialMethod::Auto).is_err());
    }

    #[test]
    fn growth_condition() {
        let rho = flat_solution(1.0, Point::ORIGIN, 10.0, 64);
        let sup = rho.samples().iter().fold(0.0f64, |a, &b| a.max(b));
        assert!(growth_condition_check(&rho, sup.max(1.0)).unwrap().pass);
        let g = CartesianGrid::centered(3.5, 64).unwrap();
        let fast = DensityField::with_tail_mass(g.clone(), g.sample(|p| p.norm_sq().powi(2).exp()), ConformalFactor::Zero, 0.0)
            .unwrap();
        for c in [0.5, 1.0, 2.0] {
            assert!(!growth_condition_check(&fast, c).unwrap().pass, "C={c}");
        }
        let zero = DensityField::new(g, vec![0.0; 4096], ConformalFactor::Zero).unwrap();
        assert!(growth_condition_check(&zero, 1.0).unwrap().pass);
    }

    #[test]
    fn envelope_of_flat_solution() {
        let rho = flat_solution(1.0, Point::ORIGIN, 60.0, 512);
        let env = decay_envelope(&rho, &AnnulusSpec::doubling(20.0).unwrap()).unwrap();
        assert!((env.tail_slope + 4.0).abs() < 0.1);
        assert!((env.k_best - 8.0).abs() < 0.5);
        let g = CartesianGrid::centered(30.0, 256).unwrap();
        let gauss = DensityField::from_fn(g, ConformalFactor::Zero, |p| (-p.norm_sq() / 8.0).exp()).unwrap();
        let k1 = decay_envelope(&gauss, &AnnulusSpec::doubling(2.0).unwrap()).unwrap().k_best;
        let k2 = decay_envelope(&gauss, &AnnulusSpec::doubling(6.0).unwrap()).unwrap().k_best;
        assert!(k2 > 10.0 * k1);
    }

    #[test]
    fn envelope_slope_across_scales() {
        for lambda in [0.5, 1.0, 2.0] {
            let rho = flat_solution(lambda, Point::ORIGIN, 60.0 * lambda, 256);
            let env = decay_envelope(&rho, &AnnulusSpec::doubling(15.0 * lambda).unwrap()).unwrap();
            assert!((env.tail_slope / env.predicted_slope - 1.0).abs() < 0.03);
        }
    }

    #[test]
    fn membership() {
        let rho = flat_solution(1.0, Point::ORIGIN, 40.0, 256);
        let rep = membership_check(&rho, &MembershipOptions::default());
        assert!(rep.pass && (rep.mass + rep.tail_mass - 8.0 * PI).abs() < 1e-3);
        let g = CartesianGrid::centered(5.0, 32).unwrap();
        let zero = DensityField::new(g, vec![0.0; 1024], ConformalFactor::Zero).unwrap();
        assert!(!membership_check(&zero, &MembershipOptions::default()).pass);
        let slow = |hw: f64| {
            DensityField::from_fn(CartesianGrid::centered(hw, 128).unwrap(), ConformalFactor::Zero, |p| {
                1.0 / (1.0 + p.norm_sq())
            })
            .unwrap()
        };
        let (a, b) = (slow(20.0), slow(80.0));
        assert!(b.mass() > a.mass() + 5.0);
        assert!(!membership_check(&b, &MembershipOptions::default()).tail_finite);
    }

    #[test]
    fn csv_round_trip() {
        let rho = flat_solution(1.0, Point::ORIGIN, 4.0, 16);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rho.csv");
        rho.to_csv(&path).unwrap();
        let back = DensityField::from_csv(&path, ConformalFactor::Zero).unwrap();
        assert_eq!(back.grid(), rho.grid());
        for (a, b) in back.samples().iter().zip(rho.samples()) {
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }
    }
}
