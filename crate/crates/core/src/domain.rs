//! Grids, quadrature weights and truncation bookkeeping.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A point (or vector) in the plane.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_sq(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    pub fn dist(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

/// Uniform `n × n` cell-centred grid on the square `center + [-half_width, half_width]²`.
///
/// Samples are stored row-major: index `j * n + i` holds the cell in column `i`
/// (x direction) and row `j` (y direction).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpec", into = "GridSpec")]
pub struct CartesianGrid {
    center: Point,
    half_width: f64,
    n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct GridSpec {
    center: Point,
    half_width: f64,
    n: usize,
}

impl TryFrom<GridSpec> for CartesianGrid {
    type Error = Error;
    fn try_from(s: GridSpec) -> Result<Self> {
        CartesianGrid::new(s.center, s.half_width, s.n)
    }
}

impl From<CartesianGrid> for GridSpec {
    fn from(g: CartesianGrid) -> Self {
        GridSpec { center: g.center, half_width: g.half_width, n: g.n }
    }
}

/// Builds a grid; see [`CartesianGrid::new`].
pub fn make_cartesian_grid(center: Point, half_width: f64, n: usize) -> Result<CartesianGrid> {
    CartesianGrid::new(center, half_width, n)
}

impl CartesianGrid {
    pub fn new(center: Point, half_width: f64, n: usize) -> Result<Self> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n = {n} must be even and at least 8")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half_width = {half_width} must be positive")));
        }
        if !(center.x.is_finite() && center.y.is_finite()) {
            return Err(Error::InvalidGrid("center must be finite".into()));
        }
        Ok(Self { center, half_width, n })
    }

    /// Grid centred at the origin.
    pub fn centered(half_width: f64, n: usize) -> Result<Self> {
        Self::new(Point::ORIGIN, half_width, n)
    }

    pub fn center(&self) -> Point {
        self.center
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n + i
    }

    /// Column and row of a flat index.
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.n, k / self.n)
    }

    /// x coordinate of column `i`.
    pub fn x(&self, i: usize) -> f64 {
        self.center.x - self.half_width + (i as f64 + 0.5) * self.spacing()
    }

    /// y coordinate of row `j`.
    pub fn y(&self, j: usize) -> f64 {
        self.center.y - self.half_width + (j as f64 + 0.5) * self.spacing()
    }

    pub fn cell_center(&self, i: usize, j: usize) -> Point {
        Point::new(self.x(i), self.y(j))
    }

    pub fn point(&self, k: usize) -> Point {
        let (i, j) = self.coords(k);
        self.cell_center(i, j)
    }

    /// Cell centres in storage order.
    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        (0..self.len()).map(move |k| self.point(k))
    }

    /// Evaluates `f` at every cell centre.
    pub fn sample(&self, f: impl Fn(Point) -> f64 + Sync) -> Vec<f64> {
        use rayon::prelude::*;
        (0..self.len()).into_par_iter().map(|k| f(self.point(k))).collect()
    }

    /// Midpoint-rule integral `Σ v h²`, summed in storage order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_area()
    }

    /// Radius of the largest origin-centred disc inside the grid.
    pub fn inscribed_radius(&self) -> f64 {
        self.inscribed_radius_about(Point::ORIGIN)
    }

    /// Radius of the largest disc about `p` inside the grid (0 if `p` is outside).
    pub fn inscribed_radius_about(&self, p: Point) -> f64 {
        let dx = self.half_width - (p.x - self.center.x).abs();
        let dy = self.half_width - (p.y - self.center.y).abs();
        dx.min(dy).max(0.0)
    }

    /// True if cell `(i, j)` lies within `width` cells of the boundary.
    pub fn in_boundary_layer(&self, i: usize, j: usize, width: usize) -> bool {
        i < width || j < width || i + width >= self.n || j + width >= self.n
    }

    /// Mask of cells within `width` cells of the boundary.
    pub fn boundary_layer_mask(&self, width: usize) -> Vec<bool> {
        (0..self.len())
            .map(|k| {
                let (i, j) = self.coords(k);
                self.in_boundary_layer(i, j, width)
            })
            .collect()
    }

    /// Bilinear interpolation of cell-centred samples; `None` outside the hull of the centres.
    pub fn bilinear(&self, values: &[f64], p: Point) -> Option<f64> {
        let h = self.spacing();
        let fx = (p.x - self.center.x + self.half_width) / h - 0.5;
        let fy = (p.y - self.center.y + self.half_width) / h - 0.5;
        let last = (self.n - 1) as f64;
        if !(0.0..=last).contains(&fx) || !(0.0..=last).contains(&fy) {
            return None;
        }
        let i0 = (fx.floor() as usize).min(self.n - 2);
        let j0 = (fy.floor() as usize).min(self.n - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v00 = values[self.index(i0, j0)];
        let v10 = values[self.index(i0 + 1, j0)];
        let v01 = values[self.index(i0, j0 + 1)];
        let v11 = values[self.index(i0 + 1, j0 + 1)];
        Some((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))
    }

    /// Bicubic Lagrange interpolation of cell-centre values; `None` where the 4×4 stencil leaves the grid.
    pub fn bicubic(&self, values: &[f64], p: Point) -> Option<f64> {
        let h = self.spacing();
        let fx = (p.x - self.center.x + self.half_width) / h - 0.5;
        let fy = (p.y - self.center.y + self.half_width) / h - 0.5;
        let last = (self.n - 2) as f64;
        if !(1.0..=last).contains(&fx) || !(1.0..=last).contains(&fy) {
            return None;
        }
        let i0 = (fx.floor() as usize).min(self.n - 3) - 1;
        let j0 = (fy.floor() as usize).min(self.n - 3) - 1;
        let wx = cubic_weights(fx - i0 as f64 - 1.0);
        let wy = cubic_weights(fy - j0 as f64 - 1.0);
        let mut acc = 0.0;
        for (b, wyb) in wy.iter().enumerate() {
            let row: f64 = wx.iter().enumerate().map(|(a, wxa)| wxa * values[self.index(i0 + a, j0 + b)]).sum();
            acc += wyb * row;
        }
        Some(acc)
    }

    /// Distance from `origin` (inside the grid) to the grid edge along direction `angle`.
    pub fn ray_exit_distance(&self, origin: Point, angle: f64) -> f64 {
        let (s, c) = angle.sin_cos();
        let mut t = f64::INFINITY;
        let lo = Point::new(self.center.x - self.half_width, self.center.y - self.half_width);
        let hi = Point::new(self.center.x + self.half_width, self.center.y + self.half_width);
        if c > 0.0 {
            t = t.min((hi.x - origin.x) / c);
        } else if c < 0.0 {
            t = t.min((lo.x - origin.x) / c);
        }
        if s > 0.0 {
            t = t.min((hi.y - origin.y) / s);
        } else if s < 0.0 {
            t = t.min((lo.y - origin.y) / s);
        }
        t.max(0.0)
    }

    /// `∫₀^{2π} g(R(ψ)) dψ` where `R(ψ)` is the ray exit distance from `origin`.
    ///
    /// With `g(R) = ∫_R^∞ f(r) r dr` this integrates a radial `f` over the exterior of the grid.
    pub fn exterior_angular_integral(&self, origin: Point, g: impl Fn(f64) -> f64) -> f64 {
        let lo = Point::new(self.center.x - self.half_width, self.center.y - self.half_width);
        let hi = Point::new(self.center.x + self.half_width, self.center.y + self.half_width);
        let mut breaks: Vec<f64> = [
            Point::new(hi.x, hi.y),
            Point::new(lo.x, hi.y),
            Point::new(lo.x, lo.y),
            Point::new(hi.x, lo.y),
        ]
        .iter()
        .map(|c| (c.y - origin.y).atan2(c.x - origin.x).rem_euclid(2.0 * PI))
        .collect();
        breaks.push(0.0);
        breaks.push(2.0 * PI);
        breaks.sort_by(f64::total_cmp);
        let (nodes, weights) = gauss_legendre(48);
        breaks
            .windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let half = 0.5 * (w[1] - w[0]);
                let mid = 0.5 * (w[1] + w[0]);
                nodes
                    .iter()
                    .zip(&weights)
                    .map(|(&t, &wt)| wt * half * g(self.ray_exit_distance(origin, mid + half * t)))
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Annular diagnostic region `R ≤ |x| ≤ ratio·R`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusSpec {
    inner: f64,
    ratio: f64,
}

impl AnnulusSpec {
    pub fn new(inner: f64, ratio: f64) -> Result<Self> {
        if !(inner > 0.0 && inner.is_finite()) {
            return Err(Error::InvalidParameter(format!("annulus radius {inner} must be positive")));
        }
        if !(ratio > 1.0 && ratio.is_finite()) {
            return Err(Error::InvalidParameter(format!("annulus ratio {ratio} must exceed 1")));
        }
        Ok(Self { inner, ratio })
    }

    /// The annulus `B_{2R} - B_R`.
    pub fn doubling(inner: f64) -> Result<Self> {
        Self::new(inner, 2.0)
    }

    pub fn inner(&self) -> f64 {
        self.inner
    }

    pub fn outer(&self) -> f64 {
        self.inner * self.ratio
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.inner && r <= self.outer()
    }

    /// Errors unless the annulus (about the origin) fits inside `grid`.
    pub fn check_inside(&self, grid: &CartesianGrid) -> Result<()> {
        if self.outer() > grid.inscribed_radius() {
            return Err(Error::OutsideGrid(format!(
                "annulus outer radius {} exceeds inscribed radius {}",
                self.outer(),
                grid.inscribed_radius()
            )));
        }
        Ok(())
    }
}

/// Lagrange weights on the nodes `-1, 0, 1, 2` at offset `t ∈ [0, 1]`.
fn cubic_weights(t: f64) -> [f64; 4] {
    [
        -t * (t - 1.0) * (t - 2.0) / 6.0,
        (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
        -(t + 1.0) * t * (t - 2.0) / 2.0,
        (t + 1.0) * t * (t - 1.0) / 6.0,
    ]
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for k in 0..n.div_ceil(2) {
        let mut z = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, z);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - z * z) * dp * dp);
        nodes[k] = -z;
        nodes[n - 1 - k] = z;
        weights[k] = w;
        weights[n - 1 - k] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let nf = n as f64;
    (p1, nf * (z * p1 - p0) / (z * z - 1.0))
}

/// `∫_{r0}^∞ 2π r f(r) dr` for integrands decaying at least like `r^{-3}`.
///
/// Uses the substitution `r = r0/t` and Gauss–Legendre on `t ∈ (0, 1)`.
pub fn radial_tail_integral(f: impl Fn(f64) -> f64, r0: f64) -> f64 {
    2.0 * PI * radial_tail_moment(f, r0)
}

/// `∫_{r0}^∞ r f(r) dr`, as [`radial_tail_integral`] without the `2π`.
pub fn radial_tail_moment(f: impl Fn(f64) -> f64, r0: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(64);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&s, &w)| {
            let t = 0.5 * (s + 1.0);
            let r = r0 / t;
            0.5 * w * r * f(r) * r0 / (t * t)
        })
        .sum()
}

/// Tensor Gauss–Legendre (in `sin θ`) × uniform azimuth grid on the unit sphere.
///
/// Latitude `θ ∈ (-π/2, π/2)`, azimuth `ψ ∈ [0, 2π)`. Samples are stored as
/// `k * n_lon + l` for latitude index `k` (ascending) and azimuth index `l`.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereGrid {
    n_lat: usize,
    n_lon: usize,
    latitudes: Vec<f64>,
    lat_weights: Vec<f64>,
}

/// Builds a sphere grid; see [`SphereGrid::new`].
pub fn make_sphere_grid(n_lat: usize, n_lon: usize) -> Result<SphereGrid> {
    SphereGrid::new(n_lat, n_lon)
}

impl SphereGrid {
    pub fn new(n_lat: usize, n_lon: usize) -> Result<Self> {
        if n_lat < 4 {
            return Err(Error::InvalidGrid(format!("n_lat = {n_lat} must be at least 4")));
        }
        if n_lon < 8 || n_lon % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n_lon = {n_lon} must be even and at least 8")));
        }
        let (z, w) = gauss_legendre(n_lat);
        Ok(Self { n_lat, n_lon, latitudes: z.iter().map(|s| s.asin()).collect(), lat_weights: w })
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn len(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn latitudes(&self) -> &[f64] {
        &self.latitudes
    }

    pub fn latitude(&self, k: usize) -> f64 {
        self.latitudes[k]
    }

    pub fn azimuth(&self, l: usize) -> f64 {
        2.0 * PI * l as f64 / self.n_lon as f64
    }

    pub fn azimuth_step(&self) -> f64 {
        2.0 * PI / self.n_lon as f64
    }

    pub fn index(&self, k: usize, l: usize) -> usize {
        k * self.n_lon + l
    }

    /// `(θ, ψ)` of a flat index.
    pub fn node(&self, idx: usize) -> (f64, f64) {
        (self.latitude(idx / self.n_lon), self.azimuth(idx % self.n_lon))
    }

    /// Gauss–Legendre weight of latitude ring `k` (integrates `d(sin θ)`).
    pub fn ring_weight(&self, k: usize) -> f64 {
        self.lat_weights[k]
    }

    /// Area weight of a node.
    pub fn weight(&self, idx: usize) -> f64 {
        self.lat_weights[idx / self.n_lon] * self.azimuth_step()
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|idx| {
                let (t, p) = self.node(idx);
                f(t, p)
            })
            .collect()
    }

    /// `∫ v ω_{S²}`, summed in storage order.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().enumerate().map(|(idx, v)| v * self.weight(idx)).sum()
    }
}
