//! Logarithmic Green's kernel, Newtonian potential and far-field diagnostics.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{AnnulusSpec, CartesianGrid, Point};
use crate::fft::Convolution;
use crate::geometry::VectorField;
use crate::stationary::DensityField;
use crate::{Error, Result};

/// Grids up to this size are summed directly under [`PotentialMethod::Auto`].
pub const DIRECT_MAX_N: usize = 48;

/// `G(x, y) = -(1/2π) ln|x - y|`.
pub fn green_kernel(x: Point, y: Point) -> Result<f64> {
    let d = x.dist(y);
    if d == 0.0 {
        return Err(Error::CoincidentPoints);
    }
    Ok(-d.ln() / (2.0 * PI))
}

/// `∫_{[-h/2,h/2]²} -(1/2π) ln|y| dy` in closed form.
pub fn self_cell_weight(h: f64) -> f64 {
    -(h * h / (4.0 * PI)) * ((h * h / 2.0).ln() - 3.0 + PI / 2.0)
}

/// How discrete convolutions are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialMethod {
    /// Direct `O(N²)` summation, the reference path.
    Direct,
    /// Zero-padded FFT evaluating the same discrete sum.
    Fft,
    /// Direct for `n ≤ DIRECT_MAX_N`, FFT above.
    #[default]
    Auto,
}

impl PotentialMethod {
    fn use_fft(self, n: usize) -> bool {
        match self {
            Self::Direct => false,
            Self::Fft => true,
            Self::Auto => n > DIRECT_MAX_N,
        }
    }
}

/// The discrete Green's operator `c_i = Σ_j G_ij s_j h²` (diagonal term `W(h) s_i`) on one grid.
pub struct GreenOperator {
    grid: CartesianGrid,
    method: PotentialMethod,
    conv: Convolution,
}

impl GreenOperator {
    pub fn new(grid: &CartesianGrid, method: PotentialMethod) -> Self {
        let h = grid.spacing();
        let w = self_cell_weight(h);
        let conv = Convolution::new(grid.n(), move |di, dj| {
            if di == 0 && dj == 0 {
                w
            } else {
                let r = h * ((di * di + dj * dj) as f64).sqrt();
                -r.ln() / (2.0 * PI) * h * h
            }
        });
        Self { grid: grid.clone(), method, conv }
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    /// Applies the operator to flat-area source samples `s = ρe^{2φ}`.
    pub fn apply(&self, source: &[f64]) -> Vec<f64> {
        if self.method.use_fft(self.grid.n()) {
            self.conv.apply_fft(source)
        } else {
            self.conv.apply_direct(source)
        }
    }

    pub fn apply_direct(&self, source: &[f64]) -> Vec<f64> {
        self.conv.apply_direct(source)
    }

    pub fn apply_fft(&self, source: &[f64]) -> Vec<f64> {
        self.conv.apply_fft(source)
    }

    /// Discrete Coulomb form `Σ_ij a_i G_ij b_j` with `a, b` flat-area sources.
    pub fn coulomb_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let c = self.apply(b);
        a.iter().zip(&c).map(|(x, y)| x * y).sum::<f64>() * self.grid.cell_area()
    }
}

/// The discrete kernel gradient `∇c_i = -(1/2π) Σ_{j≠i} (x_i - x_j)/|x_i - x_j|² s_j h²`.
pub struct GreenGradientOperator {
    grid: CartesianGrid,
    method: PotentialMethod,
    gx: Convolution,
    gy: Convolution,
}

impl GreenGradientOperator {
    pub fn new(grid: &CartesianGrid, method: PotentialMethod) -> Self {
        let h = grid.spacing();
        let comp = move |a: i64, b: i64, own: i64| {
            if a == 0 && b == 0 {
                0.0
            } else {
                -(own as f64) * h / ((a * a + b * b) as f64) / (2.0 * PI)
            }
        };
        Self {
            grid: grid.clone(),
            method,
            gx: Convolution::new(grid.n(), move |a, b| comp(a, b, a)),
            gy: Convolution::new(grid.n(), move |a, b| comp(a, b, b)),
        }
    }

    pub fn apply(&self, source: &[f64]) -> VectorField {
        if self.method.use_fft(self.grid.n()) {
            VectorField { x: self.gx.apply_fft(source), y: self.gy.apply_fft(source) }
        } else {
            self.apply_direct(source)
        }
    }

    pub fn apply_direct(&self, source: &[f64]) -> VectorField {
        VectorField { x: self.gx.apply_direct(source), y: self.gy.apply_direct(source) }
    }
}

/// Samples of the Newtonian potential `c_{φ,ρ}`.
#[derive(Clone, Debug, Serialize)]
pub struct PotentialField {
    pub grid: CartesianGrid,
    pub samples: Vec<f64>,
    /// Grid mass `Σ ρ e^{2φ} h²` that generated the field.
    pub mass_used: f64,
    /// The self-cell constant `W(h)`.
    pub self_cell_weight: f64,
    /// Estimated mass outside the grid.
    pub tail_mass: f64,
    /// Approximate potential of the exterior mass for an `r^{-4}` tail, `-(m_tail/2π)(ln half_width + ½)`; not applied.
    pub tail_shift_estimate: f64,
}

impl PotentialField {
    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(["x", "y", "c"])?;
        for (p, c) in self.grid.points().zip(&self.samples) {
            w.serialize((p.x, p.y, c))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Newtonian potential of `ρ` on its own grid with its own `φ`.
pub fn newtonian_potential(rho: &DensityField, method: PotentialMethod) -> PotentialField {
    let op = GreenOperator::new(rho.grid(), method);
    potential_with(&op, rho)
}

/// As [`newtonian_potential`] with a prebuilt operator.
pub fn potential_with(op: &GreenOperator, rho: &DensityField) -> PotentialField {
    let grid = rho.grid();
    let samples = op.apply(&rho.sources());
    let tail = rho.tail_mass();
    PotentialField {
        grid: grid.clone(),
        samples,
        mass_used: rho.mass(),
        self_cell_weight: self_cell_weight(grid.spacing()),
        tail_mass: tail,
        tail_shift_estimate: -tail / (2.0 * PI) * (grid.half_width().ln() + 0.5),
    }
}

/// Spread of `c + (m/4π) ln(1 + r²)` over an annulus about the origin.
#[derive(Clone, Debug, Serialize)]
pub struct FarFieldReport {
    pub max: f64,
    pub min: f64,
    pub variation: f64,
    pub cells: usize,
    pub mass: f64,
}

pub fn far_field_report(c: &PotentialField, m: f64, annulus: &AnnulusSpec) -> Result<FarFieldReport> {
    annulus.check_inside(&c.grid)?;
    let (mut max, mut min, mut cells) = (f64::NEG_INFINITY, f64::INFINITY, 0);
    for (p, v) in c.grid.points().zip(&c.samples) {
        let r = p.norm();
        if annulus.contains(r) {
            let q = v + m / (4.0 * PI) * (1.0 + r * r).ln();
            max = max.max(q);
            min = min.min(q);
            cells += 1;
        }
    }
    if cells == 0 {
        return Err(Error::OutsideGrid("annulus contains no cell centres".into()));
    }
    Ok(FarFieldReport { max, min, variation: max - min, cells, mass: m })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConformalFactor;
    use crate::profiles::ScaledCauchyProfile;

    /// Adaptive tensor Gauss–Legendre over a square, splitting around the singular corner.
    fn log_cell_oracle(h: f64) -> f64 {
        // By symmetry: 4 × ∫_0^{h/2}∫_0^{h/2} -(1/2π) ln|y|; integrate the quarter by
        // dyadic refinement towards the origin.
        fn quad(x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
            let (nodes, weights) = crate::domain::gauss_legendre(24);
            let mut s = 0.0;
            for (a, wa) in nodes.iter().zip(&weights) {
                for (b, wb) in nodes.iter().zip(&weights) {
                    let x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * a;
                    let y = 0.5 * (y0 + y1) + 0.5 * (y1 - y0) * b;
                    s += wa * wb * (x.hypot(y)).ln();
                }
            }
            s * 0.25 * (x1 - x0) * (y1 - y0)
        }
        let mut total = 0.0;
        let mut a = h / 2.0;
        while a > 1e-12 * h {
            let b = a / 2.0;
            total += quad(b, a, 0.0, b) + quad(0.0, b, b, a) + quad(b, a, b, a);
            a = b;
        }
        -4.0 * total / (2.0 * PI)
    }

    #[test]
    fn kernel_values() {
        let o = Point::ORIGIN;
        assert_eq!(green_kernel(o, Point::new(1.0, 0.0)).unwrap(), 0.0);
        let e = green_kernel(o, Point::new(0.0, std::f64::consts::E)).unwrap();
        assert!((e + 1.0 / (2.0 * PI)).abs() < 1e-15);
        assert!(matches!(green_kernel(o, o), Err(Error::CoincidentPoints)));
        let (a, b) = (Point::new(0.3, -1.2), Point::new(2.1, 0.4));
        assert_eq!(green_kernel(a, b).unwrap(), green_kernel(b, a).unwrap());
    }

    #[test]
    fn self_cell_against_oracle() {
        for h in [0.05, 0.3, 1.0, 1.7] {
            let oracle = log_cell_oracle(h);
            assert!((self_cell_weight(h) - oracle).abs() < 1e-10 * h * h, "h={h}");
        }
        let scaled = |h: f64| self_cell_weight(h) / (h * h) + h.ln() / (2.0 * PI);
        assert!((scaled(0.1) - scaled(0.7)).abs() < 1e-14);
        assert!(self_cell_weight(0.9) > 0.0);
        let doubled = self_cell_weight(0.4) / 0.16 - self_cell_weight(0.2) / 0.04;
        assert!((doubled + 2f64.ln() / (2.0 * PI)).abs() < 1e-13);
    }

    #[test]
    fn fft_matches_direct() {
        let g = CartesianGrid::centered(4.0, 64).unwrap();
        let op = GreenOperator::new(&g, PotentialMethod::Auto);
        let s = g.sample(|p| (-(p - Point::new(0.5, -0.3)).norm_sq()).exp() * (1.0 + 0.3 * p.x));
        let d = op.apply_direct(&s);
        let f = op.apply_fft(&s);
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in d.iter().zip(&f) {
            assert!((a - b).abs() <= 1e-8 * scale);
        }
        let grad = GreenGradientOperator::new(&g, PotentialMethod::Fft);
        let gd = grad.apply_direct(&s);
        let gf = grad.apply(&s);
        for (a, b) in gd.x.iter().chain(&gd.y).zip(gf.x.iter().chain(&gf.y)) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn coulomb_form_is_symmetric() {
        let g = CartesianGrid::centered(3.0, 32).unwrap();
        let op = GreenOperator::new(&g, PotentialMethod::Direct);
        let a = g.sample(|p| (-(p.norm_sq())).exp());
        let b = g.sample(|p| 1.0 / (1.0 + (p - Point::new(1.0, 0.5)).norm_sq()).powi(2));
        let ab = op.coulomb_form(&a, &b);
        let ba = op.coulomb_form(&b, &a);
        assert!((ab - ba).abs() <= 1e-13 * ab.abs());
    }

    #[test]
    fn potential_of_flat_solution() {
        let g = CartesianGrid::centered(40.0, 512).unwrap();
        let rho = ScaledCauchyProfile::rho(1.0, Point::ORIGIN).unwrap().density(&g, ConformalFactor::Zero);
        let c = newtonian_potential(&rho, PotentialMethod::Auto);
        // c ≈ -2 ln(1 + r²) once the truncated tail is restored
        for (i, tol) in [(256, 1e-2), (288, 2e-3), (320, 2e-3)] {
            let k = g.index(i, 256);
            let r = g.point(k).norm();
            let err = c.samples[k] + c.tail_shift_estimate + 2.0 * (1.0 + r * r).ln();
            assert!(err.abs() < tol, "r={r}: {err}");
        }
        let ff = far_field_report(&c, rho.total_mass(), &AnnulusSpec::doubling(10.0).unwrap()).unwrap();
        assert!(ff.variation < 0.05, "{}", ff.variation);
        let off = far_field_report(&c, 1.1 * rho.total_mass(), &AnnulusSpec::doubling(10.0).unwrap()).unwrap();
        assert!(off.variation > 0.2 * 0.8 * 1.3);
        assert!(far_field_report(&c, 8.0 * PI, &AnnulusSpec::doubling(30.0).unwrap()).is_err());
    }

    #[test]
    fn far_field_bounded_with_bump() {
        let g = CartesianGrid::centered(40.0, 256).unwrap();
        let phi = ConformalFactor::radial_bump(0.3, 2.0, Point::ORIGIN).unwrap();
        let rho = ScaledCauchyProfile::rho(1.0, Point::ORIGIN).unwrap().curved_density(&g, phi, 8.0 * PI);
        let c = newtonian_potential(&rho, PotentialMethod::Auto);
        let ff = far_field_report(&c, rho.total_mass(), &AnnulusSpec::doubling(10.0).unwrap()).unwrap();
        assert!(ff.variation < 0.05, "{}", ff.variation);
    }

    #[test]
    fn discrete_laplacian_recovers_density() {
        let g = CartesianGrid::centered(6.0, 96).unwrap();
        let rho = DensityField::new(g.clone(), g.sample(|p| (-p.norm_sq()).exp()), ConformalFactor::Zero).unwrap();
        let c = newtonian_potential(&rho, PotentialMethod::Auto);
        let lap = crate::geometry::laplacian_flat(&c.samples, &g);
        let err: f64 = (0..g.len())
            .filter(|&k| !lap.boundary_mask[k])
            .map(|k| (lap.values[k] - rho.samples()[k]).powi(2))
            .sum::<f64>()
            * g.cell_area();
        assert!(err.sqrt() < 0.05 * g.spacing(), "{}", err.sqrt());
    }

    #[test]
    fn probe_convergence() {
        // smooth compactly clipped density: errors at the origin against a fine reference
        let density = |p: Point| crate::geometry::bump(p.norm() / 2.0);
        let value = |n: usize| {
            let g = CartesianGrid::centered(3.0, n).unwrap();
            let rho = DensityField::new(g.clone(), g.sample(density), ConformalFactor::Zero).unwrap();
            let c = newtonian_potential(&rho, PotentialMethod::Auto);
            // average of the four cells around the origin
            let m = n / 2;
            (c.samples[g.index(m, m)]
                + c.samples[g.index(m - 1, m)]
                + c.samples[g.index(m, m - 1)]
                + c.samples[g.index(m - 1, m - 1)])
                / 4.0
        };
        // the four-cell average carries its own O(h²) offset; compare with Richardson on a fixed set
        let (a, b, c) = (value(48), value(96), value(192));
        let order = ((a - b) / (b - c)).abs().log2();
        assert!(order >= 1.5, "order {order}");
    }
}
