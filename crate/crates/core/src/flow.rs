//! Explicit finite-volume integration of `∂_tρ = e^{-2φ} div(∇ρ - ρ∇c)`, `c = G ⋆ (e^{2φ}ρ)`,
//! in a closed box, with mass, second-moment and free-energy diagnostics.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use crate::domain::CartesianGrid;
use crate::geometry::ConformalFactor;
use crate::potential::{GreenOperator, PotentialMethod};
use crate::stationary::{least_squares, DensityField};
use crate::virial::critical_mass_rate;
use crate::{Error, Result};

/// `B(z) = z / (e^z - 1)`.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-6 {
        1.0 - z / 2.0 + z * z / 12.0
    } else {
        z / z.exp_m1()
    }
}

/// Exponentially fitted face flux of `-∇ρ + ρ∇c` from cell `a` to its neighbour `b`.
fn face_flux(rho_a: f64, rho_b: f64, dc: f64, h: f64) -> f64 {
    (bernoulli(-dc) * rho_a - bernoulli(dc) * rho_b) / h
}

/// Snapshot of the evolution; `c` is the potential of `ρ`.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub rho: DensityField,
    pub c: Vec<f64>,
    pub dt: f64,
    pub step_count: usize,
}

impl FlowState {
    /// `∫|x|²ρ dA₀`.
    pub fn second_moment(&self) -> f64 {
        let g = self.rho.grid();
        g.points().zip(self.rho.samples()).map(|(x, r)| x.norm_sq() * r).sum::<f64>() * g.cell_area()
    }

    /// `∫ρ ln ρ dA_φ - ½ ∬ ρGρ`.
    pub fn free_energy(&self) -> f64 {
        let s = self.rho.sources();
        let coulomb = s.iter().zip(&self.c).map(|(a, b)| a * b).sum::<f64>() * self.rho.grid().cell_area();
        self.rho.entropy() - 0.5 * coulomb
    }
}

/// Flow on a fixed grid and conformal factor, with a cached Green operator.
pub struct FlowSolver {
    grid: CartesianGrid,
    phi: ConformalFactor,
    e2phi: Vec<f64>,
    op: GreenOperator,
}

impl FlowSolver {
    pub fn new(grid: &CartesianGrid, phi: ConformalFactor, method: PotentialMethod) -> Self {
        let e2phi = phi.sample(grid).into_iter().map(|p| (2.0 * p).exp()).collect();
        Self { grid: grid.clone(), phi, e2phi, op: GreenOperator::new(grid, method) }
    }

    pub fn grid(&self) -> &CartesianGrid {
        &self.grid
    }

    pub fn phi(&self) -> &ConformalFactor {
        &self.phi
    }

    /// State at `t = 0`; the box is closed, so no exterior mass is carried.
    pub fn initial_state(&self, rho: &DensityField) -> Result<FlowState> {
        if rho.grid() != &self.grid {
            return Err(Error::InvalidParameter("initial density lives on a different grid".into()));
        }
        let rho = DensityField::with_tail_mass(self.grid.clone(), rho.samples().to_vec(), self.phi.clone(), 0.0)?;
        let c = self.op.apply(&rho.sources());
        Ok(FlowState { t: 0.0, rho, c, dt: 0.0, step_count: 0 })
    }

    /// `0.2 h² min e^{2φ} / (1 + max|∇c| h)`, with `∇c` from face differences.
    pub fn stable_dt(&self, state: &FlowState) -> f64 {
        let h = self.grid.spacing();
        let n = self.grid.n();
        let mut g = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let c0 = state.c[self.grid.index(i, j)];
                if i + 1 < n {
                    g = g.max((state.c[self.grid.index(i + 1, j)] - c0).abs() / h);
                }
                if j + 1 < n {
                    g = g.max((state.c[self.grid.index(i, j + 1)] - c0).abs() / h);
                }
            }
        }
        let emin = self.e2phi.iter().copied().fold(f64::INFINITY, f64::min);
        0.2 * h * h * emin / (1.0 + g * h)
    }

    /// One explicit Euler step of the flux form; zero flux through the box boundary.
    pub fn step(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        let bound = self.stable_dt(state);
        if !(dt > 0.0) || dt > bound * (1.0 + 1e-12) {
            return Err(Error::Cfl { dt, bound });
        }
        self.advance(state, dt, 1.0)
    }

    /// The same update with negated fluxes; no stability check.
    pub fn reversed_step(&self, state: &FlowState, dt: f64) -> Result<FlowState> {
        self.advance(state, dt, -1.0)
    }

    fn advance(&self, state: &FlowState, dt: f64, direction: f64) -> Result<FlowState> {
        let g = &self.grid;
        let n = g.n();
        let h = g.spacing();
        let rho = state.rho.samples();
        let c = &state.c;
        let flux = |a: usize, b: usize| face_flux(rho[a], rho[b], c[b] - c[a], h);
        let sources: Vec<f64> = (0..g.len())
            .map(|k| {
                let (i, j) = g.coords(k);
                let mut net = 0.0;
                if i + 1 < n {
                    net += flux(k, g.index(i + 1, j));
                }
                if i > 0 {
                    net -= flux(g.index(i - 1, j), k);
                }
                if j + 1 < n {
                    net += flux(k, g.index(i, j + 1));
                }
                if j > 0 {
                    net -= flux(g.index(i, j - 1), k);
                }
                rho[k] * self.e2phi[k] - direction * dt * net / h
            })
            .collect();
        let min = sources.iter().copied().fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            return Err(Error::Negativity(min));
        }
        let samples = sources.iter().zip(&self.e2phi).map(|(s, e)| s / e).collect();
        let rho = DensityField::with_tail_mass(g.clone(), samples, self.phi.clone(), 0.0)?;
        let c = self.op.apply(&sources);
        Ok(FlowState { t: state.t + dt, rho, c, dt, step_count: state.step_count + 1 })
    }

    /// Integrates to `t_end`, recording diagnostics every step and snapshots at the requested cadence.
    pub fn run(&self, initial: &FlowState, opts: &RunOptions) -> Result<FlowRun> {
        if !(opts.t_end > 0.0) {
            return Err(Error::InvalidParameter(format!("t_end = {} must be positive", opts.t_end)));
        }
        let m0 = initial.rho.mass();
        let h2 = self.grid.cell_area();
        let mut state = initial.clone();
        let mut rows = vec![DiagnosticRow::of(&state)];
        let mut snapshots = vec![state.clone()];
        let mut halted = None;
        while state.t < opts.t_end * (1.0 - 1e-12) {
            let dt = opts.dt.unwrap_or_else(|| self.stable_dt(&state)).min(opts.t_end - state.t);
            state = self.step(&state, dt)?;
            rows.push(DiagnosticRow::of(&state));
            if opts.snapshot_every > 0 && state.step_count % opts.snapshot_every == 0 {
                snapshots.push(state.clone());
            }
            let peak = state.rho.sources().iter().copied().fold(0.0, f64::max) * h2;
            if peak > 0.5 * m0 {
                halted = Some(format!("mass {:.3} of {:.3} concentrated in one cell at t = {}", peak, m0, state.t));
                break;
            }
        }
        if snapshots.last().map(|s| s.step_count) != Some(state.step_count) {
            snapshots.push(state.clone());
        }
        Ok(FlowRun { diagnostics: FlowDiagnostics::from_rows(rows, opts.energy_tolerance), snapshots, final_state: state, halted })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RunOptions {
    /// Fixed step; `None` takes the stability bound at every step.
    pub dt: Option<f64>,
    pub t_end: f64,
    /// Keep every `snapshot_every`-th state (0 keeps only the first and last).
    pub snapshot_every: usize,
    /// Relative per-step tolerance on free-energy increase.
    pub energy_tolerance: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { dt: None, t_end: 0.1, snapshot_every: 0, energy_tolerance: 1e-3 }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiagnosticRow {
    pub step: usize,
    pub t: f64,
    pub mass: f64,
    pub w: f64,
    pub free_energy: f64,
}

impl DiagnosticRow {
    fn of(s: &FlowState) -> Self {
        Self { step: s.step_count, t: s.t, mass: s.rho.mass(), w: s.second_moment(), free_energy: s.free_energy() }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowDiagnostics {
    pub rows: Vec<DiagnosticRow>,
    /// `max |m(t) - m(0)| / m(0)`.
    pub mass_drift: f64,
    /// Largest `(F_{k+1} - F_k) / |F_k|`.
    pub max_energy_increase: f64,
    pub energy_tolerance: f64,
    pub energy_monotone: bool,
}

impl FlowDiagnostics {
    pub fn from_rows(rows: Vec<DiagnosticRow>, energy_tolerance: f64) -> Self {
        let m0 = rows.first().map_or(0.0, |r| r.mass);
        let mass_drift = rows.iter().map(|r| (r.mass - m0).abs() / m0).fold(0.0, f64::max);
        let max_energy_increase = rows
            .windows(2)
            .map(|w| (w[1].free_energy - w[0].free_energy) / w[0].free_energy.abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        Self {
            mass_drift,
            energy_monotone: max_energy_increase <= energy_tolerance,
            max_energy_increase,
            energy_tolerance,
            rows,
        }
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        w.write_record(["t", "mass", "W", "F"])?;
        for r in &self.rows {
            w.serialize((r.t, r.mass, r.w, r.free_energy))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Diagnostics of a sequence of states, e.g. run snapshots.
pub fn energy_trace(states: &[FlowState], energy_tolerance: f64) -> FlowDiagnostics {
    FlowDiagnostics::from_rows(states.iter().map(DiagnosticRow::of).collect(), energy_tolerance)
}

#[derive(Clone, Debug)]
pub struct FlowRun {
    pub final_state: FlowState,
    pub snapshots: Vec<FlowState>,
    pub diagnostics: FlowDiagnostics,
    /// Reason the run stopped before `t_end`.
    pub halted: Option<String>,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct VirialRate {
    pub slope: f64,
    pub predicted: f64,
    pub mass: f64,
    pub samples: usize,
}

/// Least-squares `dW/dt` over the diagnostics window against `4m - m²/(2π)`.
pub fn virial_rate(diag: &FlowDiagnostics, phi: &ConformalFactor) -> Result<VirialRate> {
    if !phi.is_zero() {
        return Err(Error::Precondition("the second-moment identity holds for flat φ only".into()));
    }
    if diag.rows.len() < 10 {
        return Err(Error::Precondition(format!("window of {} samples; at least 10 are needed", diag.rows.len())));
    }
    let pts: Vec<(f64, f64)> = diag.rows.iter().map(|r| (r.t, r.w)).collect();
    let (slope, _) = least_squares(&pts);
    let mass = diag.rows[0].mass;
    Ok(VirialRate { slope, predicted: critical_mass_rate(mass), mass, samples: pts.len() })
}

/// Isotropic Gaussian of mass `m` and variance `sigma2` per coordinate.
pub fn gaussian_density(grid: &CartesianGrid, phi: ConformalFactor, m: f64, sigma2: f64) -> Result<DensityField> {
    let a = m / (2.0 * PI * sigma2);
    DensityField::from_fn(grid.clone(), phi, |p| a * (-p.norm_sq() / (2.0 * sigma2)).exp())
}

/// `‖a - b‖₁ / ‖b‖₁` over the grid in `dA_φ`.
pub fn relative_l1(a: &DensityField, b: &DensityField) -> f64 {
    let w = b.area_weights();
    let num: f64 = a.samples().iter().zip(b.samples()).zip(&w).map(|((x, y), w)| (x - y).abs() * w).sum();
    let den: f64 = b.samples().iter().zip(&w).map(|(y, w)| y.abs() * w).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Point;
    use crate::profiles::ScaledCauchyProfile;

    #[test]
    fn bernoulli_is_continuous() {
        for z in [1e-7, 1e-6 * 0.999, 1e-6 * 1.001, 1e-5] {
            assert!((bernoulli(z) - z / z.exp_m1()).abs() < 1e-10);
            assert!((bernoulli(-z) - bernoulli(z) - z).abs() < 1e-12);
        }
        assert_eq!(bernoulli(0.0), 1.0);
    }

    #[test]
    fn mass_conserved_and_positive() {
        let g = CartesianGrid::centered(6.0, 32).unwrap();
        let solver = FlowSolver::new(&g, ConformalFactor::Zero, PotentialMethod::Auto);
        let s0 = solver.initial_state(&gaussian_density(&g, ConformalFactor::Zero, 4.0 * PI, 1.0).unwrap()).unwrap();
        let run = solver.run(&s0, &RunOptions { t_end: 0.2, ..Default::default() }).unwrap();
        assert!(run.diagnostics.mass_drift < 1e-12);
        assert!(run.final_state.rho.samples().iter().all(|&v| v >= 0.0));
        let w: Vec<f64> = run.diagnostics.rows.iter().map(|r| r.w).collect();
        assert!(w.windows(2).all(|p| p[1] > p[0]));
        assert!(run.diagnostics.energy_monotone, "{}", run.diagnostics.max_energy_increase);
        assert!(run.halted.is_none());
    }

    #[test]
    fn curved_flow_conserves_mass() {
        let g = CartesianGrid::centered(6.0, 32).unwrap();
        let phi = ConformalFactor::radial_bump(0.3, 3.0, Point::new(0.5, 0.0)).unwrap();
        let solver = FlowSolver::new(&g, phi.clone(), PotentialMethod::Auto);
        let s0 = solver.initial_state(&gaussian_density(&g, phi.clone(), 4.0 * PI, 1.0).unwrap()).unwrap();
        let run = solver.run(&s0, &RunOptions { t_end: 0.1, ..Default::default() }).unwrap();
        assert!(run.diagnostics.mass_drift < 1e-12);
        assert!(run.diagnostics.energy_monotone);
        assert!(virial_rate(&run.diagnostics, &phi).is_err());
    }

    #[test]
    fn cfl_violation_rejected() {
        let g = CartesianGrid::centered(6.0, 32).unwrap();
        let solver = FlowSolver::new(&g, ConformalFactor::Zero, PotentialMethod::Auto);
        let s0 = solver.initial_state(&gaussian_density(&g, ConformalFactor::Zero, 4.0 * PI, 1.0).unwrap()).unwrap();
        let bound = solver.stable_dt(&s0);
        assert!(matches!(solver.step(&s0, 2.0 * bound), Err(Error::Cfl { .. })));
        assert!(solver.step(&s0, bound).is_ok());
    }

    #[test]
    fn reversed_step_raises_energy() {
        let g = CartesianGrid::centered(4.0, 32).unwrap();
        let solver = FlowSolver::new(&g, ConformalFactor::Zero, PotentialMethod::Auto);
        let s0 = solver.initial_state(&gaussian_density(&g, ConformalFactor::Zero, 4.0 * PI, 1.0).unwrap()).unwrap();
        let dt = 0.5 * solver.stable_dt(&s0);
        let fwd = solver.step(&s0, dt).unwrap();
        let back = solver.reversed_step(&s0, dt).unwrap();
        assert!(fwd.free_energy() < s0.free_energy());
        assert!(back.free_energy() > s0.free_energy());
    }

    #[test]
    fn stationary_profile_persists() {
        let g = CartesianGrid::centered(10.0, 128).unwrap();
        let rho = ScaledCauchyProfile::rho(1.0, Point::ORIGIN).unwrap().density(&g, ConformalFactor::Zero);
        let solver = FlowSolver::new(&g, ConformalFactor::Zero, PotentialMethod::Auto);
        let s0 = solver.initial_state(&rho).unwrap();
        let run = solver.run(&s0, &RunOptions { t_end: 0.05, ..Default::default() }).unwrap();
        assert!(relative_l1(&run.final_state.rho, &s0.rho) < 0.02);
    }

    #[test]
    fn virial_rate_needs_window() {
        let g = CartesianGrid::centered(6.0, 16).unwrap();
        let solver = FlowSolver::new(&g, ConformalFactor::Zero, PotentialMethod::Auto);
        let s0 = solver.initial_state(&gaussian_density(&g, ConformalFactor::Zero, PI, 1.0).unwrap()).unwrap();
        let diag = energy_trace(&[s0.clone(), s0], 1e-3);
        assert!(virial_rate(&diag, &ConformalFactor::Zero).is_err());
    }

    #[test]
    fn diagnostics_csv() {
        let g = CartesianGrid::centered(6.0, 16).unwrap();
        let solver = FlowSolver::new(&g, ConformalFactor::Zero, PotentialMethod::Auto);
        let s0 = solver.initial_state(&gaussian_density(&g, ConformalFactor::Zero, PI, 1.0).unwrap()).unwrap();
        let run = solver.run(&s0, &RunOptions { t_end: 0.05, snapshot_every: 5, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("diag.csv");
        run.diagnostics.to_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("t,mass,W,F\n"));
        assert_eq!(text.lines().count(), run.diagnostics.rows.len() + 1);
        assert_eq!(run.snapshots.last().unwrap().step_count, run.final_state.step_count);
    }

    #[test]
    fn concentrated_mass_halts() {
        let g = CartesianGrid::centered(1.0, 16).unwrap();
        let solver = FlowSolver::new(&g, ConformalFactor::Zero, PotentialMethod::Auto);
        let s0 = solver.initial_state(&gaussian_density(&g, ConformalFactor::Zero, 16.0 * PI, 0.004).unwrap()).unwrap();
        let run = solver.run(&s0, &RunOptions { t_end: 1.0, ..Default::default() }).unwrap();
        assert!(run.halted.is_some());
    }
}
