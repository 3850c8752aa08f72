//! Stereographic transport to the round sphere, the Kazdan–Warner residual and its obstruction integrals.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{CartesianGrid, Point, SphereGrid};
use crate::geometry::ConformalFactor;
use crate::profiles::ScaledCauchyProfile;
use crate::stationary::DensityField;
use crate::{Error, Result, RHO_FLOOR};

/// Stereographic chart: colatitude `σ` from the South pole maps to radius `r = λ tan(σ/2)` about `x⋆`,
/// latitude `θ = σ - π/2`, so the North pole is the point at infinity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StereographicMap {
    lambda: f64,
    x_star: Point,
}

impl StereographicMap {
    pub fn new(lambda: f64, x_star: Point) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!("scale λ = {lambda} must be positive")));
        }
        Ok(Self { lambda, x_star })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn x_star(&self) -> Point {
        self.x_star
    }

    /// Planar radius of latitude `θ`.
    pub fn radius(&self, theta: f64) -> f64 {
        self.lambda * ((theta + PI / 2.0) / 2.0).tan()
    }

    /// `dr/dθ`.
    pub fn radius_derivative(&self, theta: f64) -> f64 {
        let c = ((theta + PI / 2.0) / 2.0).cos();
        0.5 * self.lambda / (c * c)
    }

    /// Image of `(θ, ψ)` in the plane; `None` at the North pole.
    pub fn to_plane(&self, theta: f64, psi: f64) -> Option<Point> {
        if theta >= PI / 2.0 {
            return None;
        }
        let r = self.radius(theta);
        Some(self.x_star + Point::new(r * psi.cos(), r * psi.sin()))
    }

    /// `(θ, ψ)` of a plane point.
    pub fn to_sphere(&self, x: Point) -> (f64, f64) {
        let d = x - self.x_star;
        let theta = 2.0 * (d.norm() / self.lambda).atan() - PI / 2.0;
        (theta, d.y.atan2(d.x).rem_euclid(2.0 * PI))
    }

    /// `∫ ½ ρ_{λ,x⋆} dA₀` over the grid plus the closed-form exterior part; equals `4π`.
    pub fn transported_area(&self, grid: &CartesianGrid) -> f64 {
        let p = ScaledCauchyProfile::rho(self.lambda, self.x_star).expect("validated scale");
        let inside = 0.5 * grid.integrate(&grid.sample(|x| p.eval(x)));
        inside + 0.5 * p.total_mass() * p.exterior_fraction(grid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldRole {
    U,
    H,
    U1,
}

/// Node values on a sphere grid.
#[derive(Clone, Debug)]
pub struct SphereField {
    pub role: FieldRole,
    pub values: Vec<f64>,
}

impl SphereField {
    pub fn new(role: FieldRole, values: Vec<f64>) -> Self {
        Self { role, values }
    }

    pub fn constant(role: FieldRole, grid: &SphereGrid, v: f64) -> Self {
        Self { role, values: vec![v; grid.len()] }
    }

    pub fn to_csv(&self, grid: &SphereGrid, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(["theta", "psi", "value"])?;
        for (idx, v) in self.values.iter().enumerate() {
            let (t, p) = grid.node(idx);
            w.serialize((t, p, v))?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Transport {
    pub u: SphereField,
    pub h: SphereField,
    /// Weight fraction of nodes outside the plane grid.
    pub cap_fraction: f64,
    /// Envelope constant `K` of the cap extrapolation `ρ ≈ K r^{-4}`.
    pub cap_constant: f64,
}

/// `u = ½ ln(ρ/ρ_{λ,x⋆})` and `h = e^{2φ}` pulled back to the sphere; `ln ρ` is interpolated bicubically.
pub fn transport_to_sphere(rho: &DensityField, map: &StereographicMap, sgrid: &SphereGrid) -> Result<Transport> {
    let grid = rho.grid();
    let profile = ScaledCauchyProfile::rho(map.lambda, map.x_star)?;
    let cap_constant = cap_constant(rho, map.x_star)?;
    let l2 = map.lambda * map.lambda;
    let logs: Vec<f64> = rho.samples().iter().map(|&v| v.max(RHO_FLOOR).ln()).collect();
    let mut u = Vec::with_capacity(sgrid.len());
    let mut h = Vec::with_capacity(sgrid.len());
    let mut cap = 0.0;
    for idx in 0..sgrid.len() {
        let (theta, psi) = sgrid.node(idx);
        let inside = map.to_plane(theta, psi).and_then(|x| grid.bicubic(&logs, x).map(|v| (x, v)));
        match inside {
            Some((x, log_rho)) => {
                if grid.bilinear(rho.samples(), x).is_some_and(|v| v < RHO_FLOOR) {
                    return Err(Error::Precondition(format!("density vanishes at ({:.3}, {:.3})", x.x, x.y)));
                }
                u.push(0.5 * (log_rho - profile.eval(x).ln()));
                h.push((2.0 * rho.phi().eval(x)).exp());
            }
            None => {
                cap += sgrid.weight(idx);
                let r = map.radius(theta);
                // ρ_λ r⁴ → 8λ² at infinity
                let ratio = if r.is_finite() { (l2 + r * r).powi(2) / (8.0 * l2 * r.powi(4)) } else { 1.0 / (8.0 * l2) };
                u.push(0.5 * (cap_constant * ratio).ln());
                h.push(1.0);
            }
        }
    }
    let cap_fraction = cap / (4.0 * PI);
    if cap_fraction > 0.2 {
        return Err(Error::Precondition(format!(
            "polar cap carries {:.1}% of the sphere weight",
            100.0 * cap_fraction
        )));
    }
    Ok(Transport {
        u: SphereField::new(FieldRole::U, u),
        h: SphereField::new(FieldRole::H, h),
        cap_fraction,
        cap_constant,
    })
}

/// Mean of `ρ r⁴` over the outer quarter of the largest inscribed disc about `x⋆`.
fn cap_constant(rho: &DensityField, x_star: Point) -> Result<f64> {
    let outer = rho.grid().inscribed_radius_about(x_star);
    let values: Vec<f64> = rho
        .grid()
        .points()
        .zip(rho.samples())
        .filter_map(|(p, &v)| {
            let r = p.dist(x_star);
            (r >= 0.75 * outer && r <= outer && v >= RHO_FLOOR).then(|| v * r.powi(4))
        })
        .collect();
    if values.is_empty() {
        return Err(Error::Precondition("no positive density on the outer annulus".into()));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Plane samples `ρ_{λ,x⋆} e^{2u}` recovered from a sphere field by interpolation in `(θ, ψ)`.
pub fn sphere_to_plane(u: &SphereField, map: &StereographicMap, sgrid: &SphereGrid, grid: &CartesianGrid) -> Vec<f64> {
    let profile = ScaledCauchyProfile::rho(map.lambda, map.x_star).expect("validated scale");
    let lat = sgrid.latitudes();
    let nl = sgrid.n_lon();
    grid.sample(|x| {
        let (theta, psi) = map.to_sphere(x);
        let k = lat.partition_point(|&t| t < theta).clamp(1, lat.len() - 1);
        let t = ((theta - lat[k - 1]) / (lat[k] - lat[k - 1])).clamp(0.0, 1.0);
        let fl = psi / sgrid.azimuth_step();
        let l0 = fl.floor() as usize % nl;
        let s = fl - fl.floor();
        let at = |k: usize| (1.0 - s) * u.values[sgrid.index(k, l0)] + s * u.values[sgrid.index(k, (l0 + 1) % nl)];
        let uv = (1.0 - t) * at(k - 1) + t * at(k);
        profile.eval(x) * (2.0 * uv).exp()
    })
}

/// Value at the node across the nearest pole, used as the ghost beyond the first and last rings.
fn across_pole(values: &[f64], sgrid: &SphereGrid, k: usize, l: usize) -> f64 {
    values[sgrid.index(k, (l + sgrid.n_lon() / 2) % sgrid.n_lon())]
}

/// Three-point neighbourhood of node `(k, l)` along its meridian, continued across the poles:
/// `(θ₋, v₋, v₀, θ₊, v₊)`.
fn meridian_stencil(values: &[f64], sgrid: &SphereGrid, k: usize, l: usize) -> (f64, f64, f64, f64, f64) {
    let lat = sgrid.latitudes();
    let n = sgrid.n_lat();
    let (tm, vm) = if k == 0 {
        (-PI - lat[0], across_pole(values, sgrid, 0, l))
    } else {
        (lat[k - 1], values[sgrid.index(k - 1, l)])
    };
    let (tp, vp) = if k + 1 == n {
        (PI - lat[n - 1], across_pole(values, sgrid, n - 1, l))
    } else {
        (lat[k + 1], values[sgrid.index(k + 1, l)])
    };
    (lat[k] - tm, vm, values[sgrid.index(k, l)], tp - lat[k], vp)
}

/// `∂_θ` by three-point differences on the non-uniform latitudes, continuing across the poles.
pub fn d_theta(values: &[f64], sgrid: &SphereGrid) -> Vec<f64> {
    let nl = sgrid.n_lon();
    (0..sgrid.len())
        .map(|idx| {
            let (dm, vm, v0, dp, vp) = meridian_stencil(values, sgrid, idx / nl, idx % nl);
            (-dp / (dm * (dm + dp))) * vm + ((dp - dm) / (dm * dp)) * v0 + (dm / (dp * (dm + dp))) * vp
        })
        .collect()
}

/// `∂_ψ` by periodic central differences.
pub fn d_psi(values: &[f64], sgrid: &SphereGrid) -> Vec<f64> {
    let nl = sgrid.n_lon();
    let dpsi = sgrid.azimuth_step();
    (0..sgrid.len())
        .map(|idx| {
            let (k, l) = (idx / nl, idx % nl);
            (values[sgrid.index(k, (l + 1) % nl)] - values[sgrid.index(k, (l + nl - 1) % nl)]) / (2.0 * dpsi)
        })
        .collect()
}

/// Positive spherical Laplacian `-(∂²_θ - tan θ ∂_θ) - cos^{-2}θ ∂²_ψ`, three-point differences in both
/// directions with the meridians continued across the poles.
pub fn spherical_laplacian(values: &[f64], sgrid: &SphereGrid) -> Vec<f64> {
    let nl = sgrid.n_lon();
    let dpsi = sgrid.azimuth_step();
    (0..sgrid.len())
        .map(|idx| {
            let (k, l) = (idx / nl, idx % nl);
            let theta = sgrid.latitude(k);
            let (dm, vm, v0, dp, vp) = meridian_stencil(values, sgrid, k, l);
            let first = (-dp / (dm * (dm + dp))) * vm + ((dp - dm) / (dm * dp)) * v0 + (dm / (dp * (dm + dp))) * vp;
            let second = 2.0 * (vm / (dm * (dm + dp)) - v0 / (dm * dp) + vp / (dp * (dm + dp)));
            let lon = (values[sgrid.index(k, (l + 1) % nl)] - 2.0 * v0 + values[sgrid.index(k, (l + nl - 1) % nl)])
                / (dpsi * dpsi);
            -(second - theta.tan() * first) - lon / theta.cos().powi(2)
        })
        .collect()
}

/// `‖Δ_{S²}u - h e^{2u} + 1‖_{L²(ω)}`.
pub fn kw_residual(u: &SphereField, h: &SphereField, sgrid: &SphereGrid) -> f64 {
    let lap = spherical_laplacian(&u.values, sgrid);
    let r: Vec<f64> = (0..sgrid.len())
        .map(|i| {
            let v = lap[i] - h.values[i] * (2.0 * u.values[i]).exp() + 1.0;
            v * v
        })
        .collect();
    sgrid.integrate(&r).sqrt()
}

/// Degree-one harmonic `u₁` selected by index: 1 `sin θ`, 2 `cos θ cos ψ`, 3 `cos θ sin ψ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarmonicIndex(u8);

impl HarmonicIndex {
    pub fn new(i: u8) -> Result<Self> {
        if (1..=3).contains(&i) {
            Ok(Self(i))
        } else {
            Err(Error::InvalidParameter(format!("degree-one harmonic index {i} must be 1, 2 or 3")))
        }
    }

    pub const SIN_THETA: HarmonicIndex = HarmonicIndex(1);

    pub fn all() -> [HarmonicIndex; 3] {
        [Self(1), Self(2), Self(3)]
    }

    pub fn value(self, theta: f64, psi: f64) -> f64 {
        match self.0 {
            1 => theta.sin(),
            2 => theta.cos() * psi.cos(),
            _ => theta.cos() * psi.sin(),
        }
    }

    /// `(∂_θu₁, ∂_ψu₁ / cos²θ)`.
    fn gradient(self, theta: f64, psi: f64) -> (f64, f64) {
        match self.0 {
            1 => (theta.cos(), 0.0),
            2 => (-theta.sin() * psi.cos(), -psi.sin() / theta.cos()),
            _ => (-theta.sin() * psi.sin(), psi.cos() / theta.cos()),
        }
    }

    /// Flat gradient of `u₁ ∘ p⁻¹` at a plane point.
    fn plane_gradient(self, map: &StereographicMap, x: Point) -> Point {
        let l = map.lambda;
        let d = x - map.x_star;
        let q = l * l + d.norm_sq();
        match self.0 {
            1 => d * (4.0 * l * l / (q * q)),
            2 => Point::new(2.0 * l * (q - 2.0 * d.x * d.x), -4.0 * l * d.x * d.y) * (1.0 / (q * q)),
            _ => Point::new(-4.0 * l * d.x * d.y, 2.0 * l * (q - 2.0 * d.y * d.y)) * (1.0 / (q * q)),
        }
    }

    pub fn field(self, sgrid: &SphereGrid) -> SphereField {
        SphereField::new(FieldRole::U1, sgrid.sample(|t, p| self.value(t, p)))
    }
}

/// `∫ g_{S²}(du₁, dh) e^{2u} ω_{S²}`.
pub fn obstruction_integral(u: &SphereField, h: &SphereField, index: HarmonicIndex, sgrid: &SphereGrid) -> f64 {
    let ht = d_theta(&h.values, sgrid);
    let hp = d_psi(&h.values, sgrid);
    let integrand: Vec<f64> = (0..sgrid.len())
        .map(|idx| {
            let (theta, psi) = sgrid.node(idx);
            let (gt, gp) = index.gradient(theta, psi);
            (gt * ht[idx] + gp * hp[idx]) * (2.0 * u.values[idx]).exp()
        })
        .collect();
    sgrid.integrate(&integrand)
}

fn require_radial_about(phi: &ConformalFactor, x_star: Point) -> Result<()> {
    match phi {
        ConformalFactor::Zero => Ok(()),
        ConformalFactor::GridSampled { .. } => Err(Error::Precondition("sampled φ is not known to be radial".into())),
        _ => {
            let c = phi.center().unwrap_or_default();
            if c.dist(x_star) > 1e-12 * (1.0 + c.norm()) {
                return Err(Error::Precondition(format!(
                    "φ is radial about ({}, {}), not about the projection centre",
                    c.x, c.y
                )));
            }
            Ok(())
        }
    }
}

/// `∫ cos θ ∂_θh e^{2u} ω_{S²}` with the analytic `∂_θh = 2e^{2φ}φ'(r) dr/dθ` and the ring mean of `e^{2u}`.
pub fn radial_obstruction(phi: &ConformalFactor, u: &SphereField, map: &StereographicMap, sgrid: &SphereGrid) -> Result<f64> {
    require_radial_about(phi, map.x_star)?;
    let nl = sgrid.n_lon();
    let total = (0..sgrid.n_lat())
        .map(|k| {
            let theta = sgrid.latitude(k);
            let r = map.radius(theta);
            let (v, dv) = phi.radial_profile(r).unwrap_or((0.0, 0.0));
            let dh = 2.0 * (2.0 * v).exp() * dv * map.radius_derivative(theta);
            let ring: f64 = (0..nl).map(|l| (2.0 * u.values[sgrid.index(k, l)]).exp()).sum::<f64>() * sgrid.azimuth_step();
            sgrid.ring_weight(k) * theta.cos() * dh * ring
        })
        .sum();
    Ok(total)
}

/// Plane-side form `∫ ∇ũ₁·∇(e^{2φ}) e^{2ũ} dA₀` with `ũ = ½ ln(ρ/ρ_{λ,x⋆})`.
pub fn plane_obstruction(rho: &DensityField, map: &StereographicMap, index: HarmonicIndex) -> Result<f64> {
    let grid = rho.grid();
    let profile = ScaledCauchyProfile::rho(map.lambda, map.x_star)?;
    let phi = rho.phi();
    let mut total = 0.0;
    for (k, x) in grid.points().enumerate() {
        let g = phi.gradient(x);
        if g.x == 0.0 && g.y == 0.0 {
            continue;
        }
        let v = rho.samples()[k];
        if v < RHO_FLOOR {
            return Err(Error::Precondition("density vanishes inside the support of φ".into()));
        }
        let dh = g * (2.0 * (2.0 * phi.eval(x)).exp());
        total += index.plane_gradient(map, x).dot(dh) * v / profile.eval(x);
    }
    Ok(total * grid.cell_area())
}

#[derive(Clone, Debug, Serialize)]
pub struct CandidateObstruction {
    pub label: String,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NonexistenceCertificate {
    pub verdict: String,
    pub amplitude: f64,
    /// Sign of `∂_rφ` on the flank.
    pub flank_sign: f64,
    pub candidates: Vec<CandidateObstruction>,
    pub min_magnitude: f64,
}

/// Checks that `φ` is radial, nonconstant and single-signed in `∂_rφ`, then evaluates the
/// obstruction against `u = 0` and the transported scale perturbations `ρ_{sλ}/ρ_λ`.
pub fn nonexistence_certificate(phi: &ConformalFactor, map: &StereographicMap, sgrid: &SphereGrid) -> Result<NonexistenceCertificate> {
    require_radial_about(phi, map.x_star)?;
    let support = phi.support_radius();
    let samples: Vec<(f64, f64)> = (1..2000)
        .map(|i| phi.radial_profile(support * i as f64 / 2000.0).unwrap_or((0.0, 0.0)))
        .collect();
    let (lo, hi) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(s.0), b.max(s.0)));
    if phi.is_zero() || support == 0.0 || hi - lo == 0.0 {
        return Err(Error::Precondition("φ is constant, so nothing obstructs a solution".into()));
    }
    let pos = samples.iter().any(|s| s.1 > 0.0);
    let neg = samples.iter().any(|s| s.1 < 0.0);
    if pos && neg {
        return Err(Error::Precondition("∂_rφ changes sign; the radial obstruction is not sign-definite".into()));
    }
    let flank_sign = if pos { 1.0 } else { -1.0 };
    let h = SphereField::new(
        FieldRole::H,
        sgrid.sample(|t, p| map.to_plane(t, p).map_or(1.0, |x| (2.0 * phi.eval(x)).exp())),
    );
    let mut candidates = Vec::new();
    for s in [1.0, 0.8, 1.25] {
        // u = ½ ln(ρ_{sλ}/ρ_λ) in closed form on the sphere
        let u = SphereField::new(
            FieldRole::U,
            sgrid.sample(|t, _| {
                let r = map.radius(t);
                let l2 = map.lambda * map.lambda;
                let s2 = s * s * l2;
                if r.is_finite() {
                    0.5 * (s2 * (l2 + r * r).powi(2) / (l2 * (s2 + r * r).powi(2))).ln()
                } else {
                    0.5 * (s * s).ln()
                }
            }),
        );
        let value = obstruction_integral(&u, &h, HarmonicIndex::SIN_THETA, sgrid);
        candidates.push(CandidateObstruction { label: format!("u = transported scale ratio {s}"), value });
    }
    let min_magnitude = candidates.iter().map(|c| c.value.abs()).fold(f64::INFINITY, f64::min);
    let amplitude = match *phi {
        ConformalFactor::RadialBump { amplitude, .. } | ConformalFactor::Ring { amplitude, .. } => amplitude,
        _ => 0.0,
    };
    Ok(NonexistenceCertificate {
        verdict: "NONZERO OBSTRUCTION".into(),
        amplitude,
        flank_sign,
        candidates,
        min_magnitude,
    })
}
