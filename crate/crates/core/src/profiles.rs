//! Scaled Cauchy profiles `ρ_{λ,x⋆} = 8λ²/(λ²+r²)²`, `μ_{λ,x⋆} = ρ_{λ,x⋆}/8π`, and their closed-form identities.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::{radial_tail_moment, CartesianGrid, Point};
use crate::geometry::ConformalFactor;
use crate::potential::{GreenOperator, PotentialMethod};
use crate::stationary::DensityField;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Mass `8π`: the flat stationary solution.
    Rho,
    /// Mass 1.
    Mu,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledCauchyProfile {
    lambda: f64,
    x_star: Point,
    normalization: Normalization,
}

impl ScaledCauchyProfile {
    pub fn new(lambda: f64, x_star: Point, normalization: Normalization) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale λ = {lambda} must be positive")));
        }
        Ok(Self { lambda, x_star, normalization })
    }

    pub fn rho(lambda: f64, x_star: Point) -> Result<Self> {
        Self::new(lambda, x_star, Normalization::Rho)
    }

    pub fn mu(lambda: f64, x_star: Point) -> Result<Self> {
        Self::new(lambda, x_star, Normalization::Mu)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn x_star(&self) -> Point {
        self.x_star
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Total flat mass: `8π` or 1.
    pub fn total_mass(&self) -> f64 {
        match self.normalization {
            Normalization::Rho => 8.0 * PI,
            Normalization::Mu => 1.0,
        }
    }

    pub fn eval(&self, x: Point) -> f64 {
        eval_profile(self, x)
    }

    /// Fraction of the mass outside `grid`, in closed form per direction.
    pub fn exterior_fraction(&self, grid: &CartesianGrid) -> f64 {
        let l2 = self.lambda * self.lambda;
        if grid.inscribed_radius_about(self.x_star) == 0.0 {
            return 1.0;
        }
        grid.exterior_angular_integral(self.x_star, |r| l2 / (2.0 * PI * (l2 + r * r)))
    }

    /// The profile sampled on `grid` as a density on `(R², g_φ)`; tail mass in closed form.
    pub fn density(&self, grid: &CartesianGrid, phi: ConformalFactor) -> DensityField {
        let samples = grid.sample(|p| self.eval(p));
        let tail = self.total_mass() * self.exterior_fraction(grid);
        DensityField::with_tail_mass(grid.clone(), samples, phi, tail).expect("profile samples are valid")
    }

    /// `m μ^φ = m μ e^{-2φ}`: unit `g_φ`-mass profile scaled to mass `m` (when `supp φ` lies inside the grid).
    pub fn curved_density(&self, grid: &CartesianGrid, phi: ConformalFactor, m: f64) -> DensityField {
        let mu = Self { normalization: Normalization::Mu, ..*self };
        let samples = grid.sample(|p| m * mu.eval(p) * (-2.0 * phi.eval(p)).exp());
        let tail = m * mu.exterior_fraction(grid);
        DensityField::with_tail_mass(grid.clone(), samples, phi, tail).expect("profile samples are valid")
    }
}

pub fn eval_profile(p: &ScaledCauchyProfile, x: Point) -> f64 {
    let l2 = p.lambda * p.lambda;
    let q = l2 + (x - p.x_star).norm_sq();
    match p.normalization {
        Normalization::Rho => 8.0 * l2 / (q * q),
        Normalization::Mu => l2 / (PI * q * q),
    }
}

/// `∫ mμ ln(mμ) dA₀ = m ln(m/(π e²)) - 2m ln λ`.
pub fn mu_entropy_identity(m: f64, lambda: f64) -> f64 {
    m * (m / PI).ln() - 2.0 * m - 2.0 * m * lambda.ln()
}

/// `∫ G(x, y) μ_{λ,x⋆}(y) dA₀(y) = (1/8π)(ln μ(x) - 2 ln λ + ln π) = -(1/4π) ln(λ² + |x - x⋆|²)`.
pub fn mu_potential_identity(lambda: f64, x_star: Point, x: Point) -> f64 {
    let mu = lambda * lambda / (PI * (lambda * lambda + (x - x_star).norm_sq()).powi(2));
    (mu.ln() - 2.0 * lambda.ln() + PI.ln()) / (8.0 * PI)
}

/// `∬ μ G μ = -(1/2π) ln λ - 1/(4π)`.
pub fn mu_coulomb_identity(lambda: f64) -> f64 {
    -lambda.ln() / (2.0 * PI) - 1.0 / (4.0 * PI)
}

/// Closed form against grid quadrature.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub lambda: f64,
    pub closed_form: f64,
    pub numeric: f64,
    /// `|numeric - closed_form| / |closed_form|`.
    pub relative_error: f64,
    /// Magnitude of the neglected exterior contribution.
    pub tail_bound: f64,
    pub half_width: f64,
    pub n: usize,
}

impl IdentityCheck {
    fn new(name: String, lambda: f64, closed_form: f64, numeric: f64, tail_bound: f64, grid: &CartesianGrid) -> Self {
        Self {
            name,
            lambda,
            closed_form,
            numeric,
            relative_error: (numeric - closed_form).abs() / closed_form.abs(),
            tail_bound,
            half_width: grid.half_width(),
            n: grid.n(),
        }
    }
}

fn mu_samples(lambda: f64, x_star: Point, grid: &CartesianGrid) -> Result<Vec<f64>> {
    let p = ScaledCauchyProfile::mu(lambda, x_star)?;
    Ok(grid.sample(|x| p.eval(x)))
}

fn mu_radial(lambda: f64) -> impl Fn(f64) -> f64 {
    move |r| lambda * lambda / (PI * (lambda * lambda + r * r).powi(2))
}

/// Entropy of `mμ_{λ,x⋆}` by the midpoint rule.
pub fn check_entropy_identity(m: f64, lambda: f64, x_star: Point, grid: &CartesianGrid) -> Result<IdentityCheck> {
    let mu = mu_samples(lambda, x_star, grid)?;
    let numeric = grid.integrate(&mu.iter().map(|&v| entropy_density(m * v)).collect::<Vec<_>>());
    let f = mu_radial(lambda);
    let tail = grid.exterior_angular_integral(x_star, |r0| {
        radial_tail_moment(|r| entropy_density(m * f(r)).abs(), r0)
    });
    Ok(IdentityCheck::new(
        "mu_entropy".into(),
        lambda,
        mu_entropy_identity(m, lambda),
        numeric,
        tail,
        grid,
    ))
}

fn entropy_density(v: f64) -> f64 {
    if v > crate::RHO_FLOOR {
        v * v.ln()
    } else {
        0.0
    }
}

/// Potential of `μ_{λ,x⋆}` at the cell centres nearest to `x⋆ + offset` for each offset.
pub fn check_potential_identity(
    lambda: f64,
    x_star: Point,
    offsets: &[Point],
    grid: &CartesianGrid,
    method: PotentialMethod,
) -> Result<Vec<IdentityCheck>> {
    let mu = mu_samples(lambda, x_star, grid)?;
    let c = GreenOperator::new(grid, method).apply(&mu);
    let f = mu_radial(lambda);
    offsets
        .iter()
        .map(|&off| {
            let target = x_star + off;
            let k = nearest_cell(grid, target)?;
            let x = grid.point(k);
            let d = x.dist(x_star);
            let tail = grid.exterior_angular_integral(x_star, |r0| {
                radial_tail_moment(|r| f(r) * (r + d).ln().abs().max((r - d).abs().ln().abs()), r0)
            }) / (2.0 * PI);
            Ok(IdentityCheck::new(
                format!("mu_potential@({:.3},{:.3})", off.x, off.y),
                lambda,
                mu_potential_identity(lambda, x_star, x),
                c[k],
                tail,
                grid,
            ))
        })
        .collect()
}

fn nearest_cell(grid: &CartesianGrid, p: Point) -> Result<usize> {
    let h = grid.spacing();
    let o = grid.center() - Point::new(grid.half_width(), grid.half_width());
    let i = ((p.x - o.x) / h - 0.5).round();
    let j = ((p.y - o.y) / h - 0.5).round();
    let n = grid.n() as f64;
    if i < 0.0 || j < 0.0 || i >= n || j >= n {
        return Err(Error::OutsideGrid(format!("probe ({}, {}) outside the grid", p.x, p.y)));
    }
    Ok(grid.index(i as usize, j as usize))
}

/// Coulomb energy `∬ μ G μ` by the discrete double sum with self-cell weight.
pub fn check_coulomb_identity(
    lambda: f64,
    x_star: Point,
    grid: &CartesianGrid,
    method: PotentialMethod,
) -> Result<IdentityCheck> {
    let mu = mu_samples(lambda, x_star, grid)?;
    let numeric = GreenOperator::new(grid, method).coulomb_form(&mu, &mu);
    let f = mu_radial(lambda);
    let tail = 2.0
        * grid.exterior_angular_integral(x_star, |r0| {
            radial_tail_moment(|r| f(r) * (lambda * lambda + r * r).ln().abs() / (4.0 * PI), r0)
        });
    Ok(IdentityCheck::new("mu_coulomb".into(), lambda, mu_coulomb_identity(lambda), numeric, tail, grid))
}

#[derive(Clone, Debug, Serialize)]
pub struct DiracRow {
    pub lambda: f64,
    /// `Σ μ_λ f h²` over the grid.
    pub integral: f64,
    /// Analytic mass of `μ_λ` outside the grid.
    pub tail_mass: f64,
    pub error: f64,
    /// Set when `h > λ/2`.
    pub under_resolved: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiracReport {
    pub target: f64,
    pub rows: Vec<DiracRow>,
    /// Errors non-increasing along the sequence.
    pub monotone: bool,
}

/// `∫ μ_{λ,x⋆} f dA₀` along a sequence of scales, compared with `f(x⋆)`.
pub fn dirac_family_check(
    f: impl Fn(Point) -> f64 + Sync,
    x_star: Point,
    lambdas: &[f64],
    grid: &CartesianGrid,
) -> Result<DiracReport> {
    let target = f(x_star);
    let fs = grid.sample(&f);
    let rows = lambdas
        .iter()
        .map(|&lambda| {
            let p = ScaledCauchyProfile::mu(lambda, x_star)?;
            let w = grid.sample(|x| p.eval(x));
            let integral = w.iter().zip(&fs).map(|(a, b)| a * b).sum::<f64>() * grid.cell_area();
            Ok(DiracRow {
                lambda,
                integral,
                tail_mass: p.exterior_fraction(grid),
                error: (integral - target).abs(),
                under_resolved: grid.spacing() > 0.5 * lambda,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monotone = rows.windows(2).all(|w| w[1].error <= w[0].error);
    Ok(DiracReport { target, rows, monotone })
}

/// Geometric scales `base · 2^k` for `k = 0..count`.
pub fn geometric_lambdas(base: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| base * 2f64.powi(k as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_values() {
        let o = Point::ORIGIN;
        assert_eq!(ScaledCauchyProfile::rho(1.0, o).unwrap().eval(o), 8.0);
        assert!((ScaledCauchyProfile::mu(1.0, o).unwrap().eval(o) - 1.0 / PI).abs() < 1e-15);
        let v = ScaledCauchyProfile::mu(2.0, o).unwrap().eval(Point::new(0.0, 2.0));
        assert!((v - 4.0 / (PI * 64.0)).abs() < 1e-15);
        assert!(ScaledCauchyProfile::mu(0.0, o).is_err());
    }

    #[test]
    fn closed_forms() {
        assert!((mu_coulomb_identity(1.0) + 1.0 / (4.0 * PI)).abs() < 1e-15);
        assert!((mu_coulomb_identity(std::f64::consts::E) + 0.238732).abs() < 1e-6);
        let m = 8.0 * PI;
        let shift = mu_entropy_identity(m, std::f64::consts::E * 1.3) - mu_entropy_identity(m, 1.3);
        assert!((shift + 2.0 * m).abs() < 1e-12);
        // independent high-precision quadrature of ∫ 8πμ ln(8πμ) at λ = 1
        assert!((mu_entropy_identity(m, 1.0) - 1.996_58).abs() < 1e-4);
        let o = Point::new(0.4, 1.0);
        assert!(mu_potential_identity(1.0, o, o).abs() < 1e-15);
        for r in [0.3, 1.0, 4.0] {
            let x = o + Point::new(r, 0.0);
            let v = mu_potential_identity(1.7, o, x);
            assert!((v + (1.7f64 * 1.7 + r * r).ln() / (4.0 * PI)).abs() < 1e-14);
        }
        // fixed r/λ: λ-shift gives -(1/2π)Δ ln λ
        let a = mu_potential_identity(1.0, o, o + Point::new(2.0, 0.0));
        let b = mu_potential_identity(3.0, o, o + Point::new(6.0, 0.0));
        assert!((b - a + 3f64.ln() / (2.0 * PI)).abs() < 1e-14);
    }

    #[test]
    fn unit_mass_on_grid() {
        let g = CartesianGrid::centered(200.0, 2048).unwrap();
        let p = ScaledCauchyProfile::mu(1.0, Point::ORIGIN).unwrap();
        let mass = g.integrate(&g.sample(|x| p.eval(x)));
        assert!((mass - 1.0).abs() < 1e-3);
        assert!((mass + p.exterior_fraction(&g) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn dirac_sequences() {
        let g = CartesianGrid::centered(60.0, 1024).unwrap();
        let xs = Point::new(0.3, -0.2);
        let ones = dirac_family_check(|_| 1.0, xs, &[0.5, 0.25, 0.125], &g).unwrap();
        assert!(ones.rows[2].under_resolved && !ones.rows[1].under_resolved);
        for r in ones.rows.iter().filter(|r| !r.under_resolved) {
            assert!((r.integral + r.tail_mass - 1.0).abs() < 1e-3);
        }
        let lin = dirac_family_check(|p| 2.0 * (p.x - xs.x) - (p.y - xs.y) + 1.5, xs, &[0.5, 0.25], &g).unwrap();
        for r in &lin.rows {
            assert!((r.integral + 1.5 * r.tail_mass - 1.5).abs() < 1e-3);
        }
        let gauss = dirac_family_check(|p| (-(p - xs).norm_sq()).exp(), xs, &geometric_lambdas(0.3, 3), &g).unwrap();
        // listed with growing λ: errors must grow
        assert!(!gauss.monotone && gauss.rows.windows(2).all(|w| w[1].error > w[0].error));
        let fine = dirac_family_check(|p| (-(p - xs).norm_sq()).exp(), xs, &[0.05], &g).unwrap();
        assert!(fine.rows[0].under_resolved);
    }
}
