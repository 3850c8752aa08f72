//! Conformal factors `φ`, metric operations of `g_φ = e^{2φ}g₀`, and finite-difference stencils.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{CartesianGrid, Point};
use crate::{Error, Result};

/// Smooth mollifier profile `exp(1 - 1/(1 - s²))` on `|s| < 1`, zero outside; peak value 1.
pub fn bump(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    }
}

/// Derivative of [`bump`].
pub fn bump_derivative(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        bump(s) * (-2.0 * s / (q * q))
    }
}

/// Second derivative of [`bump`].
pub fn bump_second_derivative(s: f64) -> f64 {
    if s.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - s * s;
        let g = -2.0 * s / (q * q);
        let dg = -2.0 / (q * q) - 8.0 * s * s / (q * q * q);
        bump(s) * (g * g + dg)
    }
}

/// Compactly supported conformal factor `φ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConformalFactor {
    /// `φ ≡ 0`, the flat metric.
    Zero,
    /// `amplitude · bump(|x - center| / support_radius)`.
    RadialBump { amplitude: f64, support_radius: f64, center: Point },
    /// `amplitude · bump((|x - center| - radius) / width)`, an annular bump with `radius > width`.
    Ring { amplitude: f64, radius: f64, width: f64, center: Point },
    /// Bilinear interpolation of cell samples, zero outside the hull of the cell centres.
    GridSampled { grid: CartesianGrid, samples: Vec<f64> },
}

impl ConformalFactor {
    pub fn radial_bump(amplitude: f64, support_radius: f64, center: Point) -> Result<Self> {
        if !amplitude.is_finite() {
            return Err(Error::InvalidParameter("bump amplitude must be finite".into()));
        }
        if !(support_radius > 0.0 && support_radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("support radius {support_radius} must be positive")));
        }
        Ok(Self::RadialBump { amplitude, support_radius, center })
    }

    pub fn ring(amplitude: f64, radius: f64, width: f64, center: Point) -> Result<Self> {
        if !amplitude.is_finite() || !(width > 0.0) || !(radius > width) || !radius.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "ring needs finite amplitude and radius {radius} > width {width} > 0"
            )));
        }
        Ok(Self::Ring { amplitude, radius, width, center })
    }

    /// Wraps grid samples; the outermost ring of samples must vanish (compact support).
    pub fn grid_sampled(grid: CartesianGrid, samples: Vec<f64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "{} samples for a grid of {} cells",
                samples.len(),
                grid.len()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("conformal factor samples must be finite".into()));
        }
        let n = grid.n();
        let edge = (0..grid.len()).filter(|&k| {
            let (i, j) = grid.coords(k);
            grid.in_boundary_layer(i, j, 1) && samples[k] != 0.0
        });
        if edge.count() > 0 {
            return Err(Error::InvalidParameter(format!(
                "sampled conformal factor on the {n}x{n} grid is nonzero on the boundary ring"
            )));
        }
        Ok(Self::GridSampled { grid, samples })
    }

    /// Loads `x,y,phi` rows (with header) describing a full uniform grid.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<(f64, f64, f64)>() {
            rows.push(rec?);
        }
        let (grid, samples) = grid_from_rows(&rows)?;
        Self::grid_sampled(grid, samples)
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Self::Zero => true,
            Self::RadialBump { amplitude, .. } | Self::Ring { amplitude, .. } => *amplitude == 0.0,
            Self::GridSampled { samples, .. } => samples.iter().all(|&v| v == 0.0),
        }
    }

    /// Centre of radial kinds.
    pub fn center(&self) -> Option<Point> {
        match self {
            Self::Zero | Self::GridSampled { .. } => None,
            Self::RadialBump { center, .. } | Self::Ring { center, .. } => Some(*center),
        }
    }

    /// Radius (about the centre, or the grid centre) outside which `φ` vanishes.
    pub fn support_radius(&self) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::RadialBump { support_radius, .. } => *support_radius,
            Self::Ring { radius, width, .. } => radius + width,
            Self::GridSampled { grid, samples } => {
                let c = grid.center();
                let h = grid.spacing();
                samples
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(k, _)| grid.point(k).dist(c) + h)
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Radial profile `φ(r)` and `∂_rφ(r)` for radial kinds.
    pub fn radial_profile(&self, r: f64) -> Option<(f64, f64)> {
        match *self {
            Self::Zero => Some((0.0, 0.0)),
            Self::RadialBump { amplitude, support_radius, .. } => {
                let s = r / support_radius;
                Some((amplitude * bump(s), amplitude * bump_derivative(s) / support_radius))
            }
            Self::Ring { amplitude, radius, width, .. } => {
                let s = (r - radius) / width;
                Some((amplitude * bump(s), amplitude * bump_derivative(s) / width))
            }
            Self::GridSampled { .. } => None,
        }
    }

    pub fn eval(&self, p: Point) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::GridSampled { grid, samples } => grid.bilinear(samples, p).unwrap_or(0.0),
            _ => {
                let c = self.center().unwrap_or_default();
                self.radial_profile(p.dist(c)).map_or(0.0, |(v, _)| v)
            }
        }
    }

    /// `∇φ`; analytic for closed-form kinds, cell-wise bilinear slope for samples.
    pub fn gradient(&self, p: Point) -> Point {
        match self {
            Self::Zero => Point::ORIGIN,
            Self::GridSampled { grid, .. } => {
                let e = 1e-3 * grid.spacing();
                Point::new(
                    (self.eval(p + Point::new(e, 0.0)) - self.eval(p - Point::new(e, 0.0))) / (2.0 * e),
                    (self.eval(p + Point::new(0.0, e)) - self.eval(p - Point::new(0.0, e))) / (2.0 * e),
                )
            }
            _ => {
                let d = p - self.center().unwrap_or_default();
                let r = d.norm();
                if r == 0.0 {
                    return Point::ORIGIN;
                }
                let (_, dr) = self.radial_profile(r).unwrap_or((0.0, 0.0));
                d * (dr / r)
            }
        }
    }

    /// Flat Laplacian `Δ₀φ` (positive convention) for radial kinds.
    pub fn flat_laplacian(&self, p: Point) -> Option<f64> {
        let (amp, scale, shift) = match *self {
            Self::Zero => return Some(0.0),
            Self::RadialBump { amplitude, support_radius, .. } => (amplitude, support_radius, 0.0),
            Self::Ring { amplitude, radius, width, .. } => (amplitude, width, radius),
            Self::GridSampled { .. } => return None,
        };
        let r = p.dist(self.center().unwrap_or_default());
        let s = (r - shift) / scale;
        let d2 = amp * bump_second_derivative(s) / (scale * scale);
        let d1 = if r > 0.0 {
            amp * bump_derivative(s) / (scale * r)
        } else {
            // l'Hôpital: φ'(r)/r → φ''(0)
            d2
        };
        Some(-(d2 + d1))
    }

    /// Samples `φ` at the cell centres.
    pub fn sample(&self, grid: &CartesianGrid) -> Vec<f64> {
        grid.sample(|p| self.eval(p))
    }

    /// Largest sampled value of `φ` on `grid`.
    pub fn sup_on(&self, grid: &CartesianGrid) -> f64 {
        self.sample(grid).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }
}

pub(crate) fn grid_from_rows(rows: &[(f64, f64, f64)]) -> Result<(CartesianGrid, Vec<f64>)> {
    let mut xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let mut ys: Vec<f64> = rows.iter().map(|r| r.1).collect();
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() < 1e-9 * (1.0 + b.abs()));
    }
    let n = xs.len();
    if ys.len() != n || rows.len() != n * n || n < 8 {
        return Err(Error::Parse(format!(
            "{} rows with {} distinct x and {} distinct y do not form a square grid",
            rows.len(),
            xs.len(),
            ys.len()
        )));
    }
    let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
    let uniform = |v: &[f64]| v.windows(2).all(|w| ((w[1] - w[0]) - h).abs() < 1e-6 * h);
    if !uniform(&xs) || !uniform(&ys) {
        return Err(Error::Parse("grid spacing is not uniform and square".into()));
    }
    let center = Point::new(0.5 * (xs[0] + xs[n - 1]), 0.5 * (ys[0] + ys[n - 1]));
    let grid = CartesianGrid::new(center, 0.5 * n as f64 * h, n)?;
    let mut samples = vec![0.0; n * n];
    for &(x, y, v) in rows {
        let i = ((x - xs[0]) / h).round() as usize;
        let j = ((y - ys[0]) / h).round() as usize;
        samples[grid.index(i, j)] = v;
    }
    Ok((grid, samples))
}

/// Per-cell metric quantities of `g_φ`.
#[derive(Clone, Debug, Serialize)]
pub struct MetricOpsReport {
    /// `e^{2φ}h²` per cell.
    pub area_weights: Vec<f64>,
    /// Gauss curvature `κ_φ = e^{-2φ}Δ₀φ`.
    pub curvature: Vec<f64>,
    pub boundary_mask: Vec<bool>,
}

pub fn metric_ops(phi: &ConformalFactor, grid: &CartesianGrid) -> MetricOpsReport {
    let curvature = gauss_curvature(phi, grid);
    MetricOpsReport {
        area_weights: conformal_area_element(phi, grid),
        curvature: curvature.values,
        boundary_mask: curvature.boundary_mask,
    }
}

/// Stencil output with the cells whose stencil touched the boundary.
#[derive(Clone, Debug, Serialize)]
pub struct StencilField {
    pub values: Vec<f64>,
    pub boundary_mask: Vec<bool>,
}

/// Vector field samples.
#[derive(Clone, Debug, Default, Serialize)]
pub struct VectorField {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// `e^{2φ}h²` per cell.
pub fn conformal_area_element(phi: &ConformalFactor, grid: &CartesianGrid) -> Vec<f64> {
    let h2 = grid.cell_area();
    phi.sample(grid).into_iter().map(|v| (2.0 * v).exp() * h2).collect()
}

/// Five-point stencil value of `-(∂²_x + ∂²_y)` at cell `(i, j)`; neighbours outside are copied from the cell.
fn five_point(field: &[f64], grid: &CartesianGrid, i: usize, j: usize) -> f64 {
    let n = grid.n();
    let h = grid.spacing();
    let c = field[grid.index(i, j)];
    let e = if i + 1 < n { field[grid.index(i + 1, j)] } else { c };
    let w = if i > 0 { field[grid.index(i - 1, j)] } else { c };
    let nn = if j + 1 < n { field[grid.index(i, j + 1)] } else { c };
    let s = if j > 0 { field[grid.index(i, j - 1)] } else { c };
    -(e + w + nn + s - 4.0 * c) / (h * h)
}

/// `Δ₀ = -(∂²_x + ∂²_y)` by the five-point stencil, copy boundary, boundary cells flagged.
pub fn laplacian_flat(field: &[f64], grid: &CartesianGrid) -> StencilField {
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            five_point(field, grid, i, j)
        })
        .collect();
    StencilField { values, boundary_mask: grid.boundary_layer_mask(1) }
}

/// `Δ_φ = e^{-2φ}Δ₀`, evaluated cell by cell.
pub fn laplacian_curved(field: &[f64], phi: &ConformalFactor, grid: &CartesianGrid) -> StencilField {
    let values = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            (-2.0 * phi.eval(grid.point(k))).exp() * five_point(field, grid, i, j)
        })
        .collect();
    StencilField { values, boundary_mask: grid.boundary_layer_mask(1) }
}

/// `κ_φ = e^{-2φ}Δ₀φ` from the stencil applied to the sampled `φ`.
pub fn gauss_curvature(phi: &ConformalFactor, grid: &CartesianGrid) -> StencilField {
    laplacian_curved(&phi.sample(grid), phi, grid)
}

/// Central-difference gradient; one-sided at the boundary.
pub fn grad_flat(field: &[f64], grid: &CartesianGrid) -> VectorField {
    let n = grid.n();
    let h = grid.spacing();
    let d = |a: usize, b: usize, span: f64| (field[a] - field[b]) / (span * h);
    let mut out = VectorField { x: vec![0.0; grid.len()], y: vec![0.0; grid.len()] };
    for j in 0..n {
        for i in 0..n {
            let k = grid.index(i, j);
            let (ie, iw) = (if i + 1 < n { i + 1 } else { i }, i.saturating_sub(1));
            let (jn, js) = (if j + 1 < n { j + 1 } else { j }, j.saturating_sub(1));
            out.x[k] = d(grid.index(ie, j), grid.index(iw, j), (ie - iw) as f64);
            out.y[k] = d(grid.index(i, jn), grid.index(i, js), (jn - js) as f64);
        }
    }
    out
}

/// Inverse-metric pairing `g_φ(a, b) = e^{-2φ}(a·b)`.
pub fn metric_pairing(a: &VectorField, b: &VectorField, phi: &ConformalFactor, grid: &CartesianGrid) -> Vec<f64> {
    (0..grid.len())
        .map(|k| (-2.0 * phi.eval(grid.point(k))).exp() * (a.x[k] * b.x[k] + a.y[k] * b.y[k]))
        .collect()
}

/// Net outward stencil flux through the boundary of the interior block (all cells but the outer ring).
///
/// Equals `Σ_{interior} Δ₀f h²` by the discrete divergence theorem.
pub fn interior_boundary_flux(field: &[f64], grid: &CartesianGrid) -> f64 {
    let n = grid.n();
    let mut flux = 0.0;
    for t in 1..n - 1 {
        let pairs = [
            (grid.index(0, t), grid.index(1, t)),
            (grid.index(n - 1, t), grid.index(n - 2, t)),
            (grid.index(t, 0), grid.index(t, 1)),
            (grid.index(t, n - 1), grid.index(t, n - 2)),
        ];
        for (outside, inside) in pairs {
            flux -= field[outside] - field[inside];
        }
    }
    flux
}
