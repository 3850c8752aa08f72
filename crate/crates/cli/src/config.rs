use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use kslab::domain::{AnnulusSpec, CartesianGrid, Point, SphereGrid};
use kslab::geometry::ConformalFactor;
use kslab::profiles::ScaledCauchyProfile;
use kslab::PotentialMethod;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
    pub method: Method,
    /// Plane grid of the single-grid subcommands; each subcommand has its own default.
    pub grid: Option<GridConfig>,
    pub phi: PhiConfig,
    pub profile: ProfileConfig,
    pub identities: IdentitiesConfig,
    pub residual: ResidualConfig,
    pub envelope: EnvelopeConfig,
    pub scan: ScanConfig,
    pub deficit: DeficitConfig,
    pub obstruction: ObstructionConfig,
    pub virial: VirialConfig,
    pub flow: FlowConfig,
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Auto,
    Direct,
    Fft,
}

impl From<Method> for PotentialMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Auto => PotentialMethod::Auto,
            Method::Direct => PotentialMethod::Direct,
            Method::Fft => PotentialMethod::Fft,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub n: usize,
    #[serde(default)]
    pub center: [f64; 2],
}

impl GridConfig {
    pub fn new(half_width: f64, n: usize) -> Self {
        Self { half_width, n, center: [0.0, 0.0] }
    }

    pub fn build(&self) -> Result<CartesianGrid, CliError> {
        Ok(CartesianGrid::new(point(self.center), self.half_width, self.n)?)
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum PhiConfig {
    #[default]
    Zero,
    RadialBump {
        amplitude: f64,
        support_radius: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    Ring {
        amplitude: f64,
        radius: f64,
        width: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// Samples on a plane grid, read from an `x,y,value` CSV.
    File { path: PathBuf },
}

impl PhiConfig {
    pub fn build(&self) -> Result<ConformalFactor, CliError> {
        Ok(match self {
            PhiConfig::Zero => ConformalFactor::Zero,
            PhiConfig::RadialBump { amplitude, support_radius, center } => {
                ConformalFactor::radial_bump(*amplitude, *support_radius, point(*center))?
            }
            PhiConfig::Ring { amplitude, radius, width, center } => {
                ConformalFactor::ring(*amplitude, *radius, *width, point(*center))?
            }
            PhiConfig::File { path } => ConformalFactor::from_csv(path)?,
        })
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileConfig {
    pub lambda: f64,
    pub x_star: [f64; 2],
    /// Total mass in units of π.
    pub mass_over_pi: f64,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { lambda: 1.0, x_star: [0.0, 0.0], mass_over_pi: 8.0 }
    }
}

impl ProfileConfig {
    pub fn mass(&self) -> f64 {
        self.mass_over_pi * PI
    }

    pub fn x_star(&self) -> Point {
        point(self.x_star)
    }

    pub fn mu(&self) -> Result<ScaledCauchyProfile, CliError> {
        Ok(ScaledCauchyProfile::mu(self.lambda, self.x_star())?)
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdentitiesConfig {
    pub lambdas: Vec<f64>,
    /// Mass multiplying μ in the entropy identity.
    pub mass: f64,
    /// Grid size of the entropy and potential quadratures.
    pub n_single: usize,
    /// Grid size of the Coulomb double integral.
    pub n_double: usize,
    /// Grid half-widths in units of λ.
    pub entropy_ratio: f64,
    pub potential_ratio: f64,
    pub coulomb_ratio: f64,
    /// Probe offsets from x⋆ for the potential identity; the closed form vanishes on `λ² + r² = 1`.
    pub probes: Vec<[f64; 2]>,
    pub tolerance: f64,
}

impl Default for IdentitiesConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.5, 1.0, 2.0],
            mass: 1.0,
            n_single: 1024,
            n_double: 512,
            entropy_ratio: 300.0,
            potential_ratio: 100.0,
            coulomb_ratio: 60.0,
            probes: vec![[1.5, 0.0], [0.0, -2.5], [2.0, 2.0], [3.0, 4.0], [-7.0, 5.0]],
            tolerance: 1e-2,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualConfig {
    pub ns: Vec<usize>,
    /// Grid half-width in units of λ.
    pub half_width_ratio: f64,
    pub interior_fraction: f64,
    pub min_order: f64,
    pub constant_tolerance: f64,
}

impl Default for ResidualConfig {
    fn default() -> Self {
        Self { ns: vec![128, 256, 512], half_width_ratio: 40.0, interior_fraction: 0.5, min_order: 1.5, constant_tolerance: 0.02 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvelopeConfig {
    pub inner_radius: f64,
    pub ratio: f64,
    pub slope_tolerance: f64,
    pub k_target: f64,
    pub k_tolerance: f64,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        Self { inner_radius: 20.0, ratio: 2.0, slope_tolerance: 0.1, k_target: 8.0, k_tolerance: 0.5 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub lambdas: Vec<f64>,
    pub n: usize,
    pub tail_ratio: f64,
    pub support_factor: f64,
    /// Relative tolerance on the slope in ln λ, and on the curved plateau shift.
    pub relative_tolerance: f64,
    pub plateau_tolerance: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![0.01, 0.03, 0.1, 0.3, 1.0],
            n: 512,
            tail_ratio: 100.0,
            support_factor: 2.0,
            relative_tolerance: 0.05,
            plateau_tolerance: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeficitConfig {
    pub members: usize,
    /// Deficits below `-floor_tolerance` fail.
    pub floor_tolerance: f64,
    pub minimizer_tolerance: f64,
    pub covariance_tolerance: f64,
}

impl Default for DeficitConfig {
    fn default() -> Self {
        Self { members: 50, floor_tolerance: 1e-3, minimizer_tolerance: 2e-2, covariance_tolerance: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObstructionConfig {
    pub n_lat: usize,
    pub n_lon: usize,
    pub min_magnitude: f64,
    /// Relative agreement of the sphere quadrature with the radial reduction.
    pub agreement_tolerance: f64,
}

impl Default for ObstructionConfig {
    fn default() -> Self {
        Self { n_lat: 256, n_lon: 256, min_magnitude: 1e-3, agreement_tolerance: 0.01 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VirialConfig {
    pub radii: Vec<f64>,
    /// Closure must stay below `closure_fraction · 4m` at the largest radius.
    pub closure_fraction: f64,
    pub interaction_tolerance: f64,
    pub aux_tolerance: f64,
}

impl Default for VirialConfig {
    fn default() -> Self {
        Self { radii: vec![5.0, 10.0, 20.0, 30.0], closure_fraction: 0.02, interaction_tolerance: 0.02, aux_tolerance: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, Default, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum InitialData {
    #[default]
    Gaussian,
    /// The stationary profile `m μ_{λ,x⋆} e^{-2φ}`.
    Profile,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    pub initial: InitialData,
    pub sigma2: f64,
    pub dt: Option<f64>,
    pub t_end: f64,
    pub snapshot_every: usize,
    pub energy_tolerance: f64,
    pub mass_tolerance: f64,
    /// Relative tolerance on dW/dt; absolute when the predicted rate is zero.
    pub slope_tolerance: f64,
    pub critical_slope_tolerance: f64,
    /// Largest relative L¹ change of profile initial data.
    pub drift_tolerance: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            initial: InitialData::Gaussian,
            sigma2: 1.0,
            dt: None,
            t_end: 0.05,
            snapshot_every: 0,
            energy_tolerance: 1e-3,
            mass_tolerance: 1e-10,
            slope_tolerance: 0.05,
            critical_slope_tolerance: 0.5,
            drift_tolerance: 0.02,
        }
    }
}

pub fn point(p: [f64; 2]) -> Point {
    Point::new(p[0], p[1])
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the sorted-key JSON form; the output directory is excluded.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("output_dir");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        format!("{digest:x}")[..16].to_string()
    }

    pub fn grid_or(&self, default: GridConfig) -> GridConfig {
        self.grid.unwrap_or(default)
    }
}

pub(crate) fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} = {v} must be positive and finite")))
    }
}

pub(crate) fn nonempty<T>(name: &str, v: &[T]) -> Result<(), CliError> {
    if v.is_empty() {
        Err(CliError::Config(format!("{name} must not be empty")))
    } else {
        Ok(())
    }
}

pub const DEFAULT_OUTPUT_DIR: &str = "kslab-out";
pub const OUTPUT_DIR_ENV: &str = "KSLAB_OUTPUT_DIR";

/// Command line flag, then environment, then config, then the default.
pub fn resolve_output_dir(flag: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

impl ExperimentConfig {
    pub fn validate_common(&self) -> Result<(ConformalFactor, ScaledCauchyProfile), CliError> {
        positive("profile.lambda", self.profile.lambda)?;
        positive("profile.mass_over_pi", self.profile.mass_over_pi)?;
        Ok((self.phi.build()?, self.profile.mu()?))
    }
}

pub fn annulus(cfg: &EnvelopeConfig) -> Result<AnnulusSpec, CliError> {
    Ok(AnnulusSpec::new(cfg.inner_radius, cfg.ratio)?)
}

pub fn sphere_grid(cfg: &ObstructionConfig) -> Result<SphereGrid, CliError> {
    Ok(SphereGrid::new(cfg.n_lat, cfg.n_lon)?)
}
