//! Critical-mass machinery: the weighted elliptic problem for the virial correction and the
//! assembly of `I₁`, `I₂`, `I₃` against `4m - m²/(2π)`.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::domain::CartesianGrid;
use crate::fft::DirichletPoisson;
use crate::geometry::{bump, grad_flat, ConformalFactor, VectorField};
use crate::krylov::gmres;
use crate::potential::{GreenGradientOperator, PotentialMethod};
use crate::stationary::DensityField;
use crate::{Error, Result, RHO_FLOOR};

/// `4m - m²/(2π)`.
pub fn critical_mass_rate(m: f64) -> f64 {
    4.0 * m - m * m / (2.0 * PI)
}

/// Discrete form of `Δ_φ f + g_φ(df, dc) = 4r∂_rφ`, multiplied through by `e^{2φ}`:
/// `Δ₀f + ∇c·∇f = 4 e^{2φ} x·∇φ` with zero Dirichlet data outside the grid.
pub struct WeightedEllipticProblem {
    grid: CartesianGrid,
    phi: ConformalFactor,
    grad_c: VectorField,
    rhs: Vec<f64>,
    norm_weights: Vec<f64>,
}

impl WeightedEllipticProblem {
    pub fn new(rho: &DensityField, method: PotentialMethod) -> Result<Self> {
        if let Some(k) = rho.samples().iter().position(|&v| v < RHO_FLOOR) {
            let p = rho.grid().point(k);
            return Err(Error::Precondition(format!("ρ vanishes at ({:.3}, {:.3}); the weighted norm degenerates", p.x, p.y)));
        }
        let grid = rho.grid().clone();
        let phi = rho.phi().clone();
        let e2phi: Vec<f64> = rho.phi_samples().iter().map(|p| (2.0 * p).exp()).collect();
        let grad_c = GreenGradientOperator::new(&grid, method).apply(&rho.sources());
        let rhs = grid
            .points()
            .zip(&e2phi)
            .map(|(x, e)| {
                let g = phi.gradient(x);
                if g.x == 0.0 && g.y == 0.0 {
                    0.0
                } else {
                    4.0 * e * x.dot(g)
                }
            })
            .collect();
        let h2 = grid.cell_area();
        let norm_weights = rho.samples().iter().zip(&e2phi).map(|(r, e)| 0.5 * r * e * h2).collect();
        Ok(Self { grid, phi, grad_c, rhs, norm_weights })
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn phi(&self) -> &ConformalFactor {
        &self.phi
    }

    /// `4 e^{2φ} x·∇φ` at the cell centres.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn grad_c(&self) -> &VectorField {
        &self.grad_c
    }

    /// `½ ρ e^{2φ} h²` per cell.
    pub fn norm_weights(&self) -> &[f64] {
        &self.norm_weights
    }

    fn at(&self, f: &[f64], i: i64, j: i64) -> f64 {
        let n = self.grid.n() as i64;
        if i < 0 || j < 0 || i >= n || j >= n {
            0.0
        } else {
            f[self.grid.index(i as usize, j as usize)]
        }
    }

    /// `Δ₀f + ∇c·∇f` by the five-point stencil and central differences.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let h = self.grid.spacing();
        (0..self.grid.len())
            .map(|k| {
                let (i, j) = self.grid.coords(k);
                let (i, j) = (i as i64, j as i64);
                let (e, w, n, s) = (self.at(f, i + 1, j), self.at(f, i - 1, j), self.at(f, i, j + 1), self.at(f, i, j - 1));
                let lap = -(e + w + n + s - 4.0 * f[k]) / (h * h);
                lap + (self.grad_c.x[k] * (e - w) + self.grad_c.y[k] * (n - s)) / (2.0 * h)
            })
            .collect()
    }

    /// `B(f, ψ) = Σ ψ (Δ₀f + ∇c·∇f) h²`.
    pub fn bilinear(&self, f: &[f64], psi: &[f64]) -> f64 {
        self.apply(f).iter().zip(psi).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_area()
    }

    /// `Φ(ψ) = Σ ψ · 4 e^{2φ} x·∇φ h²`.
    pub fn functional(&self, psi: &[f64]) -> f64 {
        self.rhs.iter().zip(psi).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_area()
    }

    /// `‖∇ψ‖²` over all cell faces (zero ghosts), `h²` cancelling the difference quotient.
    pub fn dirichlet_energy(&self, psi: &[f64]) -> f64 {
        let n = self.grid.n() as i64;
        let mut total = 0.0;
        for j in 0..n {
            for i in -1..n {
                total += (self.at(psi, i + 1, j) - self.at(psi, i, j)).powi(2);
                total += (self.at(psi, j, i + 1) - self.at(psi, j, i)).powi(2);
            }
        }
        total
    }

    /// `‖ψ‖²_{φ,ρ} = ‖dψ‖²_{L²(g_φ)} + ½‖√ρ ψ‖²_{L²(g_φ)}`.
    pub fn norm_sq(&self, psi: &[f64]) -> f64 {
        self.dirichlet_energy(psi) + psi.iter().zip(&self.norm_weights).map(|(p, w)| w * p * p).sum::<f64>()
    }

    /// Cauchy–Schwarz bound `K` with `|Φ(ψ)| ≤ K ‖√(½ρ) ψ‖_{L²(g_φ)} ≤ K ‖ψ‖_{φ,ρ}`.
    pub fn continuity_constant(&self) -> f64 {
        let h2 = self.grid.cell_area();
        self.rhs
            .iter()
            .zip(&self.norm_weights)
            .map(|(r, w)| r * r * h2 * h2 / w)
            .sum::<f64>()
            .sqrt()
    }

    /// Seeded compactly supported bumps well inside the grid.
    pub fn probes(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hw = self.grid.half_width();
        let c0 = self.grid.center();
        (0..count)
            .map(|_| {
                let c = c0 + crate::Point::new(rng.gen_range(-0.4..0.4) * hw, rng.gen_range(-0.4..0.4) * hw);
                let r = rng.gen_range(0.1..0.4) * hw;
                let a = rng.gen_range(0.5..2.0);
                self.grid.sample(|p| a * bump(p.dist(c) / r))
            })
            .collect()
    }
}

/// Solution of the weighted problem with its iteration history and probe checks.
#[derive(Clone, Debug, Serialize)]
pub struct AuxSolution {
    #[serde(skip)]
    pub f: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub coercivity_min: f64,
    pub coercivity_max: f64,
    pub continuity_constant: f64,
    /// Largest `|Φ(ψ)| / (K ‖ψ‖_{φ,ρ})` over the probes.
    pub continuity_ratio: f64,
    /// `‖df‖_{L²(g_φ)}`.
    pub f_gradient_l2: f64,
}

pub const COERCIVITY_PROBES: usize = 20;

/// GMRES on the discrete weighted problem, right-preconditioned by the exact Dirichlet Poisson inverse.
///
/// Before solving, `B(ψ,ψ)/‖ψ‖²_{φ,ρ}` is measured on [`COERCIVITY_PROBES`] seeded bumps; a ratio below
/// 0.9 is reported as [`Error::Coercivity`].
pub fn solve_aux_pde(problem: &WeightedEllipticProblem, tol: f64, seed: u64) -> Result<AuxSolution> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance {tol} must be positive")));
    }
    let k = problem.continuity_constant();
    let (mut cmin, mut cmax, mut cont) = (f64::INFINITY, 0.0f64, 0.0f64);
    for psi in problem.probes(COERCIVITY_PROBES, seed) {
        let norm = problem.norm_sq(&psi);
        let ratio = problem.bilinear(&psi, &psi) / norm;
        cmin = cmin.min(ratio);
        cmax = cmax.max(ratio);
        if k > 0.0 {
            cont = cont.max(problem.functional(&psi).abs() / (k * norm.sqrt()));
        }
    }
    if cmin < 0.9 {
        return Err(Error::Coercivity(cmin));
    }
    let poisson = DirichletPoisson::new(problem.grid.n(), problem.grid.spacing());
    let out = gmres(|f| problem.apply(f), |v| poisson.solve(v), &problem.rhs, tol, 60, 2000)?;
    let f_gradient_l2 = problem.dirichlet_energy(&out.solution).sqrt();
    if !f_gradient_l2.is_finite() {
        return Err(Error::Precondition("‖df‖ is not finite".into()));
    }
    Ok(AuxSolution {
        f: out.solution,
        residual_history: out.history,
        iterations: out.iterations,
        coercivity_min: cmin,
        coercivity_max: cmax,
        continuity_constant: k,
        continuity_ratio: cont,
        f_gradient_l2,
    })
}

/// Radial cutoff: 1 on `B_R`, 0 outside `B_{2R}`, cubic smoothstep in between.
#[derive(Clone, Debug, Serialize)]
pub struct Cutoff {
    pub radius: f64,
    /// `K` in `|dχ_R| ≤ K/R`.
    pub gradient_constant: f64,
    /// Sampled `max |∇χ_R| · R / K`.
    pub gradient_ratio: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

pub const CUTOFF_GRADIENT_CONSTANT: f64 = 1.5;

pub fn cutoff_profile(r: f64, radius: f64) -> f64 {
    let t = ((r - radius) / radius).clamp(0.0, 1.0);
    1.0 - t * t * (3.0 - 2.0 * t)
}

pub fn cutoff_function(radius: f64, grid: &CartesianGrid) -> Result<Cutoff> {
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!("cutoff radius {radius} must be positive")));
    }
    if 2.0 * radius > grid.inscribed_radius() {
        return Err(Error::OutsideGrid(format!(
            "cutoff support 2R = {} exceeds the inscribed radius {}",
            2.0 * radius,
            grid.inscribed_radius()
        )));
    }
    let values = grid.sample(|p| cutoff_profile(p.norm(), radius));
    let g = grad_flat(&values, grid);
    let max_grad = g.x.iter().zip(&g.y).map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
    Ok(Cutoff {
        radius,
        gradient_constant: CUTOFF_GRADIENT_CONSTANT,
        gradient_ratio: max_grad * radius / CUTOFF_GRADIENT_CONSTANT,
        values,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct VirialReport {
    pub radius: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub closure: f64,
    /// `4m - m²/(2π)` at the total mass.
    pub predicted: f64,
    pub mass: f64,
    pub tail_mass: f64,
    pub f_gradient_l2: f64,
}

/// `I₁ = Σχρ e^{2φ}h²`, `I₂ = Σχ s x·∇c h²` with `s = ρe^{2φ}`, and
/// `I₃ = Σχρ(4x·∇φ - e^{-2φ}(Δ₀f + ∇f·∇c)) e^{2φ}h²`, per cutoff radius.
///
/// `f = None` stands for `f ≡ 0` and is accepted only when `φ = 0`.
pub fn assemble_virial(rho: &DensityField, f: Option<&[f64]>, radii: &[f64], method: PotentialMethod) -> Result<Vec<VirialReport>> {
    let grid = rho.grid();
    let m = rho.total_mass();
    if !m.is_finite() {
        return Err(Error::Precondition("total mass is not finite".into()));
    }
    if rho.tail_mass() > 0.02 * m {
        return Err(Error::Precondition(format!(
            "exterior mass {:.3e} exceeds 2% of the total; enlarge the grid",
            rho.tail_mass()
        )));
    }
    if f.is_none() && !rho.phi().is_zero() {
        return Err(Error::Precondition("a curved φ needs the solution f of the weighted problem".into()));
    }
    if let Some(f) = f {
        if f.len() != grid.len() {
            return Err(Error::InvalidParameter("f has the wrong number of samples".into()));
        }
    }
    let sources = rho.sources();
    let h2 = grid.cell_area();
    let grad_c = GreenGradientOperator::new(grid, method).apply(&sources);
    // e^{2φ}·bracket of I₃ per cell
    let (correction, f_gradient_l2) = match f {
        Some(f) => {
            let problem = WeightedEllipticProblem::new(rho, method)?;
            let af = problem.apply(f);
            let c: Vec<f64> = problem.rhs().iter().zip(&af).map(|(r, a)| r - a).collect();
            (Some(c), problem.dirichlet_energy(f).sqrt())
        }
        None => (None, 0.0),
    };
    radii
        .iter()
        .map(|&radius| {
            let chi = cutoff_function(radius, grid)?.values;
            let mut i1 = 0.0;
            let mut i2 = 0.0;
            let mut i3 = 0.0;
            for (k, x) in grid.points().enumerate() {
                if chi[k] == 0.0 {
                    continue;
                }
                i1 += chi[k] * sources[k];
                i2 += chi[k] * sources[k] * (x.x * grad_c.x[k] + x.y * grad_c.y[k]);
                if let Some(c) = &correction {
                    i3 += chi[k] * rho.samples()[k] * c[k];
                }
            }
            let (i1, i2, i3) = (i1 * h2, i2 * h2, i3 * h2);
            Ok(VirialReport {
                radius,
                i1,
                i2,
                i3,
                closure: 4.0 * i1 + 2.0 * i2 + i3,
                predicted: critical_mass_rate(m),
                mass: m,
                tail_mass: rho.tail_mass(),
                f_gradient_l2,
            })
        })
        .collect()
}

pub fn virial_reports_to_csv(reports: &[VirialReport], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(["R", "I1", "I2", "I3", "closure", "predicted"])?;
    for r in reports {
        w.serialize((r.radius, r.i1, r.i2, r.i3, r.closure, r.predicted))?;
    }
    w.flush()?;
    Ok(())
}

/// `I₂` without cutoff by the kernel sum, against its symmetrized value `-(1/4π)(M² - Σs²h⁴)`.
#[derive(Clone, Debug, Serialize)]
pub struct AntisymmetryCheck {
    pub kernel_sum: f64,
    pub symmetrized: f64,
    pub relative_difference: f64,
}

pub fn i2_antisymmetry_check(rho: &DensityField, method: PotentialMethod) -> AntisymmetryCheck {
    let grid = rho.grid();
    let h2 = grid.cell_area();
    let s = rho.sources();
    let g = GreenGradientOperator::new(grid, method).apply(&s);
    let kernel_sum = grid
        .points()
        .enumerate()
        .map(|(k, x)| s[k] * (x.x * g.x[k] + x.y * g.y[k]))
        .sum::<f64>()
        * h2;
    let mass = s.iter().sum::<f64>() * h2;
    let self_terms = s.iter().map(|v| v * v).sum::<f64>() * h2 * h2;
    let symmetrized = -(mass * mass - self_terms) / (4.0 * PI);
    AntisymmetryCheck { kernel_sum, symmetrized, relative_difference: (kernel_sum - symmetrized).abs() / symmetrized.abs() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use crate::profiles::ScaledCauchyProfile;

    fn flat(hw: f64, n: usize) -> DensityField {
        let g = CartesianGrid::centered(hw, n).unwrap();
        ScaledCauchyProfile::rho(1.0, Point::ORIGIN).unwrap().density(&g, ConformalFactor::Zero)
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let rho = flat(10.0, 32);
        let p = WeightedEllipticProblem::new(&rho, PotentialMethod::Auto).unwrap();
        assert!(p.rhs().iter().all(|&v| v == 0.0));
        let sol = solve_aux_pde(&p, 1e-10, 1).unwrap();
        assert!(sol.f.iter().all(|&v| v == 0.0));
        assert_eq!(sol.f_gradient_l2, 0.0);
    }

    #[test]
    fn curved_problem_solves_with_probes() {
        let g = CartesianGrid::centered(12.0, 96).unwrap();
        let phi = ConformalFactor::radial_bump(0.2, 3.0, Point::new(1.0, 0.5)).unwrap();
        let rho = ScaledCauchyProfile::rho(1.0, Point::ORIGIN).unwrap().curved_density(&g, phi, 8.0 * PI);
        let p = WeightedEllipticProblem::new(&rho, PotentialMethod::Auto).unwrap();
        assert!(p.norm_weights().iter().all(|&w| w > 0.0));
        for (x, r) in g.points().zip(p.rhs()) {
            if x.dist(Point::new(1.0, 0.5)) >= 3.0 {
                assert_eq!(*r, 0.0);
            }
        }
        let sol = solve_aux_pde(&p, 1e-9, 3).unwrap();
        assert!(sol.coercivity_min >= 0.9 && sol.coercivity_max <= 1.1, "{} {}", sol.coercivity_min, sol.coercivity_max);
        assert!(sol.continuity_ratio <= 1.0);
        assert!(sol.residual_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(*sol.residual_history.last().unwrap() <= 1e-9);
        let r: Vec<f64> = p.apply(&sol.f).iter().zip(p.rhs()).map(|(a, b)| a - b).collect();
        let rel = r.iter().map(|v| v * v).sum::<f64>().sqrt() / p.rhs().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(rel < 1e-8);
        assert!(sol.f_gradient_l2 > 0.0 && sol.f_gradient_l2.is_finite());
    }

    #[test]
    fn vanishing_density_rejected() {
        let g = CartesianGrid::centered(5.0, 16).unwrap();
        let rho = DensityField::new(g, vec![0.0; 256], ConformalFactor::Zero).unwrap();
        assert!(WeightedEllipticProblem::new(&rho, PotentialMethod::Auto).is_err());
    }

    #[test]
    fn cutoff_shape() {
        let g = CartesianGrid::centered(20.0, 200).unwrap();
        let c = cutoff_function(5.0, &g).unwrap();
        for (x, v) in g.points().zip(&c.values) {
            let r = x.norm();
            if r <= 5.0 {
                assert_eq!(*v, 1.0);
            }
            if r >= 10.0 {
                assert_eq!(*v, 0.0);
            }
        }
        assert!(c.gradient_ratio <= 1.0 + 2.0 * g.spacing());
        assert!(cutoff_function(10.5, &g).is_err());
    }

    #[test]
    fn cutoff_mass_converges() {
        let rho = flat(60.0, 256);
        let masses: Vec<f64> = [5.0, 10.0, 20.0, 30.0]
            .iter()
            .map(|&r| {
                let c = cutoff_function(r, rho.grid()).unwrap();
                c.values.iter().zip(rho.samples()).map(|(a, b)| a * b).sum::<f64>() * rho.grid().cell_area()
            })
            .collect();
        assert!(masses.windows(2).all(|w| (8.0 * PI - w[1]).abs() < (8.0 * PI - w[0]).abs()));
        assert!((masses[3] - 8.0 * PI).abs() < 0.02);
    }

    #[test]
    fn antisymmetry_oracle() {
        let g = CartesianGrid::centered(8.0, 64).unwrap();
        let rho = DensityField::from_fn(g, ConformalFactor::Zero, |p| {
            (-(p - Point::new(1.0, 0.0)).norm_sq()).exp() + 0.3 * (-(p + Point::new(0.0, 2.0)).norm_sq() / 2.0).exp()
        })
        .unwrap();
        for method in [PotentialMethod::Direct, PotentialMethod::Fft] {
            let c = i2_antisymmetry_check(&rho, method);
            assert!(c.relative_difference < 1e-6, "{c:?}");
        }
    }

    #[test]
    fn closure_for_flat_solution_and_scaled_family() {
        let rho = flat(60.0, 512);
        let radii = [5.0, 10.0, 20.0, 30.0];
        let reps = assemble_virial(&rho, None, &radii, PotentialMethod::Auto).unwrap();
        let last = reps.last().unwrap();
        assert!(last.closure.abs() <= 0.02 * 32.0 * PI, "{last:?}");
        assert!((last.i2 / (-16.0 * PI) - 1.0).abs() < 0.02);
        assert!(reps.iter().all(|r| r.i3 == 0.0));
        for s in [0.5, 1.5] {
            let scaled = rho.scaled(s).unwrap();
            let last = assemble_virial(&scaled, None, &radii, PotentialMethod::Auto).unwrap().pop().unwrap();
            assert!((last.closure - last.predicted).abs() <= 0.02 * 32.0 * PI, "s={s}: {last:?}");
            assert!(last.predicted.abs() > 10.0);
        }
    }

    #[test]
    fn curved_requires_f() {
        let g = CartesianGrid::centered(20.0, 64).unwrap();
        let phi = ConformalFactor::radial_bump(0.1, 2.0, Point::ORIGIN).unwrap();
        let rho = ScaledCauchyProfile::rho(1.0, Point::ORIGIN).unwrap().curved_density(&g, phi, 8.0 * PI);
        assert!(assemble_virial(&rho, None, &[5.0], PotentialMethod::Auto).is_err());
        let p = WeightedEllipticProblem::new(&rho, PotentialMethod::Auto).unwrap();
        let sol = solve_aux_pde(&p, 1e-10, 0).unwrap();
        let rep = assemble_virial(&rho, Some(&sol.f), &[5.0], PotentialMethod::Auto).unwrap();
        // f solves the weighted problem, so the bracket of I₃ vanishes up to the solver tolerance
        assert!(rep[0].i3.abs() < 1e-6, "{}", rep[0].i3);
        assert!(rep[0].f_gradient_l2 > 0.0);
    }

    #[test]
    fn csv_export() {
        let rho = flat(20.0, 64);
        let reps = assemble_virial(&rho, None, &[2.0, 4.0], PotentialMethod::Auto).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("virial.csv");
        virial_reports_to_csv(&reps, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("R,I1,I2,I3,closure,predicted\n"));
        assert_eq!(text.lines().count(), 3);
    }
}
