//! Numerical laboratory for stationary and dynamic Keller-Segel theory on
//! conformally flat planes `(R², e^{2φ}g₀)`.
//!
//! Sign convention: the Laplacian is the positive operator `Δ = -(∂²_x + ∂²_y)`
//! and the Green's function is `G(x, y) = -(1/2π) ln|x - y|`, so `Δc = ρ`.

pub mod domain;
pub mod energy;
mod error;
mod fft;
pub mod flow;
pub mod geometry;
mod krylov;
pub mod potential;
pub mod profiles;
pub mod sphere;
pub mod stationary;
pub mod virial;

pub use domain::{AnnulusSpec, CartesianGrid, Point, SphereGrid};
pub use error::{Error, Result};
pub use geometry::ConformalFactor;
pub use potential::{PotentialField, PotentialMethod};
pub use profiles::{Normalization, ScaledCauchyProfile};
pub use stationary::DensityField;

/// Density values below this are treated as zero inside logarithms.
pub const RHO_FLOOR: f64 = 1e-300;
