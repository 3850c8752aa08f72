use std::f64::consts::{E, PI};
use std::path::PathBuf;

use kslab::domain::{CartesianGrid, Point};
use kslab::energy::{conformal_covariance_check, lambda_scan, log_hls_deficit, ScanOptions};
use kslab::flow::{gaussian_density, relative_l1, virial_rate, FlowSolver, RunOptions};
use kslab::geometry::ConformalFactor;
use kslab::profiles::{check_coulomb_identity, check_entropy_identity, check_potential_identity};
use kslab::sphere::{
    nonexistence_certificate, obstruction_integral, radial_obstruction, FieldRole, HarmonicIndex, SphereField,
    StereographicMap,
};
use kslab::stationary::{decay_envelope, reduced_residual, DensityField, ResidualOptions};
use kslab::virial::{assemble_virial, cutoff_function, solve_aux_pde, WeightedEllipticProblem};
use kslab::PotentialMethod;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::config::{annulus, nonempty, point, positive, sphere_grid, ExperimentConfig, GridConfig, InitialData};
use crate::output::{Check, Outcome, Report, Table};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Identities,
    Residual,
    EnergyScan,
    Deficit,
    Obstruction,
    Virial,
    Flow,
    Envelope,
}

impl Subcommand {
    pub const ALL: [Subcommand; 8] = [
        Subcommand::Identities,
        Subcommand::Residual,
        Subcommand::EnergyScan,
        Subcommand::Deficit,
        Subcommand::Obstruction,
        Subcommand::Virial,
        Subcommand::Flow,
        Subcommand::Envelope,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Identities => "identities",
            Subcommand::Residual => "residual",
            Subcommand::EnergyScan => "energy-scan",
            Subcommand::Deficit => "deficit",
            Subcommand::Obstruction => "obstruction",
            Subcommand::Virial => "virial",
            Subcommand::Flow => "flow",
            Subcommand::Envelope => "envelope",
        }
    }
}

/// Validates `cfg` for `sub`, then computes the report and its tables.
pub fn run(sub: Subcommand, cfg: &ExperimentConfig) -> Result<Outcome, CliError> {
    let hash = cfg.hash();
    let (checks, data, tables) = match sub {
        Subcommand::Identities => identities(cfg, &hash)?,
        Subcommand::Residual => residual(cfg, &hash)?,
        Subcommand::EnergyScan => energy_scan(cfg, &hash)?,
        Subcommand::Deficit => deficit(cfg, &hash)?,
        Subcommand::Obstruction => obstruction(cfg, &hash)?,
        Subcommand::Virial => virial(cfg, &hash)?,
        Subcommand::Flow => flow(cfg, &hash)?,
        Subcommand::Envelope => envelope(cfg, &hash)?,
    };
    Ok(Outcome { report: Report::new(sub.name(), &hash, checks, data), tables })
}

type Parts = (Vec<Check>, Value, Vec<(PathBuf, String)>);

fn grid_json(g: &CartesianGrid) -> Value {
    json!({
        "center": [g.center().x, g.center().y],
        "half_width": g.half_width(),
        "n": g.n(),
        "spacing": g.spacing(),
    })
}

fn table(name: &str, t: Table) -> (PathBuf, String) {
    (PathBuf::from(name), t.finish())
}

fn identities(cfg: &ExperimentConfig, hash: &str) -> Result<Parts, CliError> {
    let ic = &cfg.identities;
    cfg.validate_common()?;
    nonempty("identities.lambdas", &ic.lambdas)?;
    nonempty("identities.probes", &ic.probes)?;
    for &l in &ic.lambdas {
        positive("identities.lambdas", l)?;
    }
    positive("identities.tolerance", ic.tolerance)?;
    positive("identities.mass", ic.mass)?;
    let xs = cfg.profile.x_star();
    let offsets: Vec<Point> = ic.probes.iter().map(|&p| point(p)).collect();
    let plans = ic
        .lambdas
        .iter()
        .map(|&l| {
            let entropy = CartesianGrid::new(xs, ic.entropy_ratio * l, ic.n_single)?;
            let potential = CartesianGrid::new(xs, ic.potential_ratio * l, ic.n_single)?;
            let coulomb = CartesianGrid::new(xs, ic.coulomb_ratio * l, ic.n_double)?;
            if let Some(o) = offsets.iter().find(|o| o.x.abs().max(o.y.abs()) >= potential.half_width()) {
                return Err(CliError::Config(format!(
                    "probe ({}, {}) lies outside the potential grid for lambda = {l}",
                    o.x, o.y
                )));
            }
            Ok((l, entropy, potential, coulomb))
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let m = ic.mass;
    let method = cfg.method.into();
    let mut checks = Vec::new();
    let mut results = Vec::new();
    let mut t = Table::new(&["name", "lambda", "closed_form", "numeric", "relative_error", "tail_bound", "half_width", "n"], hash);
    for (l, ge, gp, gc) in plans {
        let mut rows = vec![check_entropy_identity(m, l, xs, &ge)?];
        rows.extend(check_potential_identity(l, xs, &offsets, &gp, method)?);
        rows.push(check_coulomb_identity(l, xs, &gc, method)?);
        for r in rows {
            checks.push(Check::at_most(format!("{} lambda={}", r.name, l), r.relative_error, ic.tolerance));
            t.row([
                r.name.clone(),
                r.lambda.to_string(),
                r.closed_form.to_string(),
                r.numeric.to_string(),
                r.relative_error.to_string(),
                r.tail_bound.to_string(),
                r.half_width.to_string(),
                r.n.to_string(),
            ]);
            results.push(r);
        }
    }
    let data = json!({ "mass": m, "x_star": cfg.profile.x_star, "identities": results });
    Ok((checks, data, vec![table("identities.csv", t)]))
}

fn residual(cfg: &ExperimentConfig, hash: &str) -> Result<Parts, CliError> {
    let rc = &cfg.residual;
    let (phi, mu) = cfg.validate_common()?;
    if rc.ns.len() < 2 || rc.ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(CliError::Config("residual.ns needs at least two increasing grid sizes".into()));
    }
    if !(rc.interior_fraction > 0.0 && rc.interior_fraction <= 1.0) {
        return Err(CliError::Config(format!("residual.interior_fraction = {} must lie in (0, 1]", rc.interior_fraction)));
    }
    positive("residual.half_width_ratio", rc.half_width_ratio)?;
    positive("residual.constant_tolerance", rc.constant_tolerance)?;
    let lambda = cfg.profile.lambda;
    let grids = rc
        .ns
        .iter()
        .map(|&n| CartesianGrid::new(cfg.profile.x_star(), rc.half_width_ratio * lambda, n))
        .collect::<Result<Vec<_>, _>>()?;

    let opts = ResidualOptions { interior_fraction: rc.interior_fraction, method: cfg.method.into(), seed: cfg.seed };
    let m = cfg.profile.mass();
    let mut rows = Vec::new();
    let mut t = Table::new(
        &["n", "half_width", "spacing", "f_variation", "f_constant", "reduced_residual_l2", "static_residual_l2", "tail_mass"],
        hash,
    );
    for g in &grids {
        let rho = mu.curved_density(g, phi.clone(), m);
        let r = reduced_residual(&rho, &opts)?;
        t.row([g.n() as f64, g.half_width(), g.spacing(), r.f_variation, r.f_constant, r.reduced_residual_l2, r.static_residual_l2, r.tail_mass]);
        rows.push((g.n(), r));
    }
    let mut checks = Vec::new();
    let mut orders = Vec::new();
    for w in rows.windows(2) {
        let order = (w[0].1.f_variation / w[1].1.f_variation).ln() / (w[1].0 as f64 / w[0].0 as f64).ln();
        checks.push(Check::at_least(format!("f_variation order n={}->{}", w[0].0, w[1].0), order, rc.min_order));
        orders.push(order);
    }
    let (n_max, last) = rows.last().expect("at least two rows");
    let target = 8f64.ln() + 2.0 * lambda.ln();
    checks.push(Check::absolute(format!("f_constant n={n_max}"), last.f_constant, target, rc.constant_tolerance));
    let data = json!({
        "grids": grids.iter().map(grid_json).collect::<Vec<_>>(),
        "orders": orders,
        "reports": rows.iter().map(|(n, r)| json!({ "n": n, "report": r })).collect::<Vec<_>>(),
        "f_constant_target": target,
    });
    Ok((checks, data, vec![table("residual.csv", t)]))
}

fn envelope(cfg: &ExperimentConfig, _hash: &str) -> Result<Parts, CliError> {
    let ec = &cfg.envelope;
    let (phi, mu) = cfg.validate_common()?;
    let grid = cfg.grid_or(GridConfig::new(60.0, 512)).build()?;
    let ann = annulus(ec)?;
    ann.check_inside(&grid)?;
    positive("envelope.slope_tolerance", ec.slope_tolerance)?;
    positive("envelope.k_tolerance", ec.k_tolerance)?;

    let rho = mu.curved_density(&grid, phi, cfg.profile.mass());
    let r = decay_envelope(&rho, &ann)?;
    let checks = vec![
        Check::absolute("tail_slope", r.tail_slope, r.predicted_slope, ec.slope_tolerance),
        Check::absolute("k_best", r.k_best, ec.k_target, ec.k_tolerance),
    ];
    let data = json!({ "grid": grid_json(&grid), "tail_mass": rho.tail_mass(), "envelope": r });
    Ok((checks, data, Vec::new()))
}

fn energy_scan(cfg: &ExperimentConfig, hash: &str) -> Result<Parts, CliError> {
    let sc = &cfg.scan;
    let (phi, _) = cfg.validate_common()?;
    if sc.lambdas.len() < 2 {
        return Err(CliError::Config("scan.lambdas needs at least two scales".into()));
    }
    for &l in &sc.lambdas {
        positive("scan.lambdas", l)?;
    }
    let (lo, hi) = sc.lambdas.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &l| (a.min(l), b.max(l)));
    if hi / lo < 100.0 * (1.0 - 1e-12) {
        return Err(CliError::Config("scan.lambdas must span two decades".into()));
    }
    positive("scan.tail_ratio", sc.tail_ratio)?;
    positive("scan.relative_tolerance", sc.relative_tolerance)?;
    positive("scan.plateau_tolerance", sc.plateau_tolerance)?;
    CartesianGrid::new(cfg.profile.x_star(), sc.tail_ratio * lo, sc.n)?;

    let m = cfg.profile.mass();
    let xs = cfg.profile.x_star();
    let opts = ScanOptions { n: sc.n, tail_ratio: sc.tail_ratio, support_factor: sc.support_factor, method: cfg.method.into() };
    let scan = lambda_scan(m, &phi, xs, &sc.lambdas, &opts)?;
    let flat = if phi.is_zero() { None } else { Some(lambda_scan(m, &ConformalFactor::Zero, xs, &sc.lambdas, &opts)?) };

    let mut checks = Vec::new();
    let critical = (cfg.profile.mass_over_pi - 8.0).abs() < 1e-12;
    let plateau_target = 8.0 * PI * (8.0 / E).ln();
    let mut shift = Value::Null;
    match &flat {
        None if critical => {
            let p = scan.plateau.as_ref().expect("plateau at the critical mass");
            checks.push(Check::absolute("plateau", p.mean, plateau_target, sc.plateau_tolerance));
        }
        None => checks.push(Check::relative("slope in ln lambda", scan.slope, scan.predicted_slope, sc.relative_tolerance)),
        Some(flat) => {
            let (row, base) = scan
                .rows
                .iter()
                .zip(&flat.rows)
                .filter(|(a, b)| !a.under_resolved && !b.under_resolved)
                .min_by(|a, b| a.0.lambda.total_cmp(&b.0.lambda))
                .ok_or_else(|| CliError::Config("every scan row is under-resolved".into()))?;
            let value = row.free_energy - base.free_energy;
            let target = -2.0 * m * phi.eval(xs);
            let name = format!("curved shift lambda={}", row.lambda);
            checks.push(if target == 0.0 {
                Check::absolute(name, value, 0.0, sc.plateau_tolerance)
            } else {
                Check::relative(name, value, target, sc.relative_tolerance)
            });
            shift = json!({ "lambda": row.lambda, "value": value, "target": target });
        }
    }

    let mut t = Table::new(
        &["lambda", "free_energy", "predicted", "mu_phi", "half_width", "spacing", "tail_bound", "under_resolved", "flat_free_energy"],
        hash,
    );
    for (k, r) in scan.rows.iter().enumerate() {
        let base = flat.as_ref().map_or(String::new(), |f| f.rows[k].free_energy.to_string());
        t.row([
            r.lambda.to_string(),
            r.free_energy.to_string(),
            r.predicted.to_string(),
            r.mu_phi.to_string(),
            r.half_width.to_string(),
            r.spacing.to_string(),
            r.tail_bound.to_string(),
            r.under_resolved.to_string(),
            base,
        ]);
    }
    let data = json!({
        "n": sc.n,
        "scan": scan,
        "flat_scan": flat,
        "plateau_target": plateau_target,
        "curved_shift": shift,
    });
    Ok((checks, data, vec![table("energy_scan.csv", t)]))
}

#[derive(Clone, Copy, Debug)]
enum Bump {
    Gaussian { sigma: f64 },
    Cauchy { scale: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Component {
    bump: Bump,
    center: Point,
    weight: f64,
}

impl Component {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let gaussian = rng.gen_bool(0.5);
        let width = rng.gen_range(0.5..2.0);
        let center = Point::new(rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0));
        let weight = rng.gen_range(0.2..1.0);
        let bump = if gaussian { Bump::Gaussian { sigma: width } } else { Bump::Cauchy { scale: width } };
        Self { bump, center, weight }
    }

    fn eval(&self, p: Point) -> f64 {
        let d2 = (p - self.center).norm_sq();
        self.weight
            * match self.bump {
                Bump::Gaussian { sigma } => (-d2 / (2.0 * sigma * sigma)).exp() / (2.0 * PI * sigma * sigma),
                Bump::Cauchy { scale } => scale * scale / (PI * (scale * scale + d2).powi(2)),
            }
    }

    fn kind(&self) -> &'static str {
        match self.bump {
            Bump::Gaussian { .. } => "gaussian",
            Bump::Cauchy { .. } => "cauchy",
        }
    }
}

fn deficit(cfg: &ExperimentConfig, hash: &str) -> Result<Parts, CliError> {
    let dc = &cfg.deficit;
    let (phi, mu) = cfg.validate_common()?;
    let grid = cfg.grid_or(GridConfig::new(30.0, 256)).build()?;
    if dc.members == 0 {
        return Err(CliError::Config("deficit.members must be positive".into()));
    }
    positive("deficit.minimizer_tolerance", dc.minimizer_tolerance)?;
    positive("deficit.covariance_tolerance", dc.covariance_tolerance)?;
    let curved = if phi.is_zero() { ConformalFactor::radial_bump(0.1, 2.0, Point::new(0.5, 0.0))? } else { phi };
    let factors = [("zero", ConformalFactor::Zero), ("curved", curved.clone())];
    let (lambda, xs, method) = (cfg.profile.lambda, cfg.profile.x_star(), PotentialMethod::from(cfg.method));

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = Table::new(&["member", "phi", "kinds", "mass", "lhs", "rhs", "deficit", "covariance_difference"], hash);
    let mut min_deficit = f64::INFINITY;
    let mut max_cov: f64 = 0.0;
    for k in 0..dc.members {
        let (label, phi_k) = &factors[k % 2];
        let count = rng.gen_range(1..=3);
        let comps: Vec<Component> = (0..count).map(|_| Component::random(&mut rng)).collect();
        let m = rng.gen_range(2.0..12.0) * PI;
        let raw = DensityField::from_fn(grid.clone(), phi_k.clone(), |p| comps.iter().map(|c| c.eval(p)).sum())?;
        let rho = raw.scaled(m / raw.mass())?;
        let cov = conformal_covariance_check(&rho, lambda, xs, method)?;
        min_deficit = min_deficit.min(cov.curved.deficit);
        max_cov = max_cov.max(cov.difference.abs());
        let kinds: Vec<&str> = comps.iter().map(Component::kind).collect();
        t.row([
            k.to_string(),
            label.to_string(),
            kinds.join("+"),
            m.to_string(),
            cov.curved.lhs.to_string(),
            cov.curved.rhs.to_string(),
            cov.curved.deficit.to_string(),
            cov.difference.to_string(),
        ]);
    }
    let minimizer = mu.curved_density(&grid, curved, cfg.profile.mass());
    let at_min = log_hls_deficit(&minimizer, lambda, xs, method)?;
    let checks = vec![
        Check::at_least("family minimum deficit", min_deficit, -dc.floor_tolerance),
        Check::at_most("deficit at minimizer", at_min.deficit.abs(), dc.minimizer_tolerance),
        Check::at_most("conformal covariance difference", max_cov, dc.covariance_tolerance),
    ];
    let data = json!({
        "grid": grid_json(&grid),
        "members": dc.members,
        "family_min_deficit": min_deficit,
        "max_covariance_difference": max_cov,
        "minimizer": at_min,
        "minimizer_tail_mass": minimizer.tail_mass(),
    });
    Ok((checks, data, vec![table("deficit.csv", t)]))
}

fn obstruction(cfg: &ExperimentConfig, hash: &str) -> Result<Parts, CliError> {
    let oc = &cfg.obstruction;
    let (phi, _) = cfg.validate_common()?;
    let sgrid = sphere_grid(oc)?;
    let map = StereographicMap::new(cfg.profile.lambda, cfg.profile.x_star())?;
    positive("obstruction.min_magnitude", oc.min_magnitude)?;
    positive("obstruction.agreement_tolerance", oc.agreement_tolerance)?;

    let cert = nonexistence_certificate(&phi, &map, &sgrid)?;
    let h = SphereField::new(
        FieldRole::H,
        sgrid.sample(|t, p| map.to_plane(t, p).map_or(1.0, |x| (2.0 * phi.eval(x)).exp())),
    );
    let u = SphereField::constant(FieldRole::U, &sgrid, 0.0);
    let sphere = obstruction_integral(&u, &h, HarmonicIndex::SIN_THETA, &sgrid);
    let radial = radial_obstruction(&phi, &u, &map, &sgrid)?;
    let checks = vec![
        Check::at_least("minimum obstruction magnitude", cert.min_magnitude, oc.min_magnitude),
        Check::flag("obstruction sign follows the flank", cert.candidates.iter().all(|c| c.value.signum() == cert.flank_sign)),
        Check::relative("sphere against radial quadrature", sphere, radial, oc.agreement_tolerance),
    ];
    let mut t = Table::new(&["label", "value"], hash);
    for c in &cert.candidates {
        t.row([c.label.clone(), c.value.to_string()]);
    }
    let data = json!({
        "sphere_grid": { "n_lat": sgrid.n_lat(), "n_lon": sgrid.n_lon() },
        "map": { "lambda": map.lambda(), "x_star": [map.x_star().x, map.x_star().y] },
        "verdict": cert.verdict,
        "certificate": cert,
        "sphere_side": sphere,
        "radial_side": radial,
    });
    Ok((checks, data, vec![table("obstruction.csv", t)]))
}

fn virial(cfg: &ExperimentConfig, hash: &str) -> Result<Parts, CliError> {
    let vc = &cfg.virial;
    let (phi, mu) = cfg.validate_common()?;
    let grid = cfg.grid_or(GridConfig::new(60.0, 512)).build()?;
    nonempty("virial.radii", &vc.radii)?;
    for &r in &vc.radii {
        positive("virial.radii", r)?;
        cutoff_function(r, &grid)?;
    }
    positive("virial.closure_fraction", vc.closure_fraction)?;
    positive("virial.interaction_tolerance", vc.interaction_tolerance)?;
    positive("virial.aux_tolerance", vc.aux_tolerance)?;

    let m = cfg.profile.mass();
    let method = cfg.method.into();
    let rho = mu.curved_density(&grid, phi, m);
    let aux = if rho.phi().is_zero() {
        None
    } else {
        let problem = WeightedEllipticProblem::new(&rho, method)?;
        Some(solve_aux_pde(&problem, vc.aux_tolerance, cfg.seed)?)
    };
    let reports = assemble_virial(&rho, aux.as_ref().map(|a| a.f.as_slice()), &vc.radii, method)?;
    let last = reports.iter().max_by(|a, b| a.radius.total_cmp(&b.radius)).expect("nonempty radii");
    let checks = vec![
        Check::at_most(format!("closure R={}", last.radius), last.closure.abs(), vc.closure_fraction * 4.0 * m),
        Check::relative(format!("I2 R={}", last.radius), last.i2, -m * m / (4.0 * PI), vc.interaction_tolerance),
    ];
    let mut t = Table::new(&["R", "I1", "I2", "I3", "closure", "predicted", "mass", "tail_mass", "f_gradient_l2"], hash);
    for r in &reports {
        t.row([r.radius, r.i1, r.i2, r.i3, r.closure, r.predicted, r.mass, r.tail_mass, r.f_gradient_l2]);
    }
    let data = json!({
        "grid": grid_json(&grid),
        "tail_mass": rho.tail_mass(),
        "reports": reports,
        "aux": aux,
    });
    Ok((checks, data, vec![table("virial.csv", t)]))
}

fn flow(cfg: &ExperimentConfig, hash: &str) -> Result<Parts, CliError> {
    let fc = &cfg.flow;
    let (phi, mu) = cfg.validate_common()?;
    let grid = cfg.grid_or(GridConfig::new(15.0, 256)).build()?;
    positive("flow.t_end", fc.t_end)?;
    positive("flow.sigma2", fc.sigma2)?;
    if let Some(dt) = fc.dt {
        positive("flow.dt", dt)?;
    }
    positive("flow.energy_tolerance", fc.energy_tolerance)?;
    positive("flow.mass_tolerance", fc.mass_tolerance)?;

    let m = cfg.profile.mass();
    let solver = FlowSolver::new(&grid, phi.clone(), cfg.method.into());
    let rho0 = match fc.initial {
        InitialData::Gaussian => gaussian_density(&grid, phi.clone(), m, fc.sigma2)?,
        InitialData::Profile => mu.curved_density(&grid, phi.clone(), m),
    };
    let state0 = solver.initial_state(&rho0)?;
    let opts = RunOptions { dt: fc.dt, t_end: fc.t_end, snapshot_every: fc.snapshot_every, energy_tolerance: fc.energy_tolerance };
    let run = solver.run(&state0, &opts)?;
    let diag = &run.diagnostics;

    let mut checks = vec![
        Check::at_most("mass drift", diag.mass_drift, fc.mass_tolerance),
        Check::at_most("free energy increase per step", diag.max_energy_increase, fc.energy_tolerance),
    ];
    let mut rate = None;
    let mut drift = None;
    match fc.initial {
        InitialData::Profile => {
            let d = relative_l1(&run.final_state.rho, &state0.rho);
            checks.push(Check::at_most("stationary L1 drift", d, fc.drift_tolerance));
            drift = Some(d);
        }
        InitialData::Gaussian if phi.is_zero() && run.halted.is_none() => {
            let r = virial_rate(diag, &phi)?;
            checks.push(if r.predicted.abs() > 1e-9 * m * m {
                Check::relative("dW/dt", r.slope, r.predicted, fc.slope_tolerance)
            } else {
                Check::absolute("dW/dt", r.slope, r.predicted, fc.critical_slope_tolerance)
            });
            rate = Some(r);
        }
        InitialData::Gaussian => {}
    }

    let mut t = Table::new(&["step", "t", "mass", "W", "F"], hash);
    for r in &diag.rows {
        t.row([r.step as f64, r.t, r.mass, r.w, r.free_energy]);
    }
    let mut tables = vec![table("flow_diagnostics.csv", t)];
    for s in &run.snapshots {
        let mut st = Table::new(&["x", "y", "rho"], hash);
        for (p, v) in grid.points().zip(s.rho.samples()) {
            st.row([p.x, p.y, *v]);
        }
        tables.push(table(&format!("snapshots/snapshot_{:06}.csv", s.step_count), st));
    }
    let data = json!({
        "grid": grid_json(&grid),
        "initial_tail_mass": rho0.tail_mass(),
        "steps": run.final_state.step_count,
        "final_time": run.final_state.t,
        "halted": run.halted,
        "mass_drift": diag.mass_drift,
        "max_energy_increase": diag.max_energy_increase,
        "energy_monotone": diag.energy_monotone,
        "virial_rate": rate,
        "stationary_drift": drift,
    });
    Ok((checks, data, tables))
}
