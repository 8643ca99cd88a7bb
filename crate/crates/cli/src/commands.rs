//! Subcommand implementations. Each returns whether its tolerances passed;
//! errors abort the run as numerical failures.

use std::fmt::Write as _;

use nalgebra::Vector3;

use fbsde_core::fbsde::{evaluate_backward_linear, relative_l2, BackwardProblem, McParams};
use fbsde_core::ns_solver::{
    contraction_probe, solve_ns, Laplacian, NSConfig, NsPicard, NsSolution, PicardTrace,
};
use fbsde_core::CoreError;
use fbsde_geom::fields::snapshot::{fmt17, write_snapshot};
use fbsde_geom::fields::{
    Grid, Resolution, SphereScalar, SphereVector, TimeField, VectorFieldSpec,
};
use fbsde_geom::geometry::{embedding_field_components, Point, Steady};
use fbsde_geom::ManifoldKind;
use fbsde_reference::{torus_spectral_ns_at, SpectralSettings};

use crate::config::RunConfig;
use crate::diagnostics::{
    amplitude, coordinate_decay, fit_decay_rate, generator_check, geometry_identities,
    leray_checks, test_scalars, variational_errors,
};
use crate::manifest::RunManifest;

/// Paths per finite-difference run of the variational flow.
pub const VARIATIONAL_PATHS: usize = 200;
/// Step of the spectral reference solver, refined to divide the node spacing.
const REFERENCE_DT: f64 = 1e-3;

#[derive(Debug)]
pub enum CommandError {
    Numerical(String),
    Io(std::io::Error),
}

impl std::fmt::Display for CommandError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommandError::Numerical(m) => f.write_str(m),
            CommandError::Io(e) => write!(f, "i/o: {e}"),
        }
    }
}

impl From<CoreError> for CommandError {
    fn from(e: CoreError) -> Self {
        CommandError::Numerical(e.to_string())
    }
}

impl From<fbsde_geom::GeometryError> for CommandError {
    fn from(e: fbsde_geom::GeometryError) -> Self {
        CommandError::Numerical(e.to_string())
    }
}

impl From<fbsde_reference::ReferenceError> for CommandError {
    fn from(e: fbsde_reference::ReferenceError) -> Self {
        CommandError::Numerical(format!("reference: {e}"))
    }
}

impl From<std::io::Error> for CommandError {
    fn from(e: std::io::Error) -> Self {
        CommandError::Io(e)
    }
}

pub type CommandResult = Result<bool, CommandError>;

/// Accumulates `check,value,tolerance,pass` rows and echoes them.
#[derive(Default)]
struct Checks {
    rows: Vec<(String, f64, f64, bool)>,
}

impl Checks {
    fn le(&mut self, name: impl Into<String>, value: f64, tol: f64) {
        let pass = value <= tol;
        self.push(name.into(), value, tol, pass);
    }

    fn ge(&mut self, name: impl Into<String>, value: f64, tol: f64) {
        let pass = value >= tol;
        self.push(name.into(), value, tol, pass);
    }

    fn push(&mut self, name: String, value: f64, tol: f64, pass: bool) {
        println!(
            "{:<32} {:>12.4e}  tol {:>10.3e}  {}",
            name,
            value,
            tol,
            if pass { "PASS" } else { "FAIL" }
        );
        self.rows.push((name, value, tol, pass));
    }

    fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.3)
    }

    fn csv(&self) -> String {
        let mut out = String::from("check,value,tolerance,pass\n");
        for (n, v, t, p) in &self.rows {
            let _ = writeln!(out, "{n},{},{},{p}", fmt17(*v), fmt17(*t));
        }
        out
    }

    fn finish(&self, m: &mut RunManifest) -> CommandResult {
        m.artifact("checks.csv", &self.csv())?;
        m.metric("checks_passed", self.all_pass());
        Ok(self.all_pass())
    }
}

fn resolution(cfg: &RunConfig) -> Resolution {
    Resolution::new(cfg.manifold, cfg.degree)
}

fn grid(cfg: &RunConfig) -> Result<Grid, CommandError> {
    Ok(match (cfg.grid, cfg.manifold) {
        (0, _) => Grid::for_fit(resolution(cfg)),
        (n, ManifoldKind::FlatTorus2) => Grid::torus(n),
        (n, ManifoldKind::UnitSphere2) => Grid::sphere(n, n)?,
    })
}

fn mc(cfg: &RunConfig) -> McParams {
    McParams {
        scheme: cfg.scheme,
        ..McParams::new(cfg.paths, cfg.dt, cfg.seed)
    }
}

fn nodes(horizon: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| horizon * i as f64 / (n - 1) as f64)
        .collect()
}

pub fn validate_geometry(cfg: &RunConfig, m: &mut RunManifest) -> CommandResult {
    let kind = cfg.manifold;
    let rep = m.phase("identities", || {
        geometry_identities(kind, cfg.samples, cfg.seed)
    });
    let leray_samples = cfg.samples.clamp(1, 20);
    let leray = m.phase("leray", || {
        leray_checks(kind, cfg.degree, leray_samples, cfg.seed)
    });
    let mut checks = Checks::default();
    for (name, v, t) in rep.checks(kind).into_iter().chain(leray.checks(kind)) {
        checks.le(name, v, t);
    }
    m.metric("identities", &rep);
    m.metric("leray", &leray);
    checks.finish(m)
}

/// Heat terminal data with a closed-form backward solution `e^{−λ(T−t)} h`.
pub fn heat_terminal(kind: ManifoldKind, degree: usize, nu: f64) -> (VectorFieldSpec, f64) {
    match kind {
        // sin(x + y) ∂_x, Bochner eigenvalue −2
        ManifoldKind::FlatTorus2 => (
            VectorFieldSpec::torus_trig(degree, &[(1, 1, 0.0, 1.0, 0.0, 0.0)]),
            2.0 * nu,
        ),
        // Killing field, Bochner eigenvalue −1
        ManifoldKind::UnitSphere2 => (VectorFieldSpec::killing(degree, 1.0), nu),
    }
}

pub fn heat(cfg: &RunConfig, m: &mut RunManifest) -> CommandResult {
    let (h, rate) = heat_terminal(cfg.manifold, cfg.degree, cfg.nu);
    let times = nodes(cfg.horizon, cfg.nodes);
    let mut prob = BackwardProblem::new(
        h.clone(),
        cfg.nu,
        cfg.horizon,
        times.clone(),
        resolution(cfg),
        mc(cfg),
    );
    prob.grid = grid(cfg)?;
    let sol = m.phase("backward", || evaluate_backward_linear(&prob))?;
    let batches = sol.batch_fields()?;
    let mut checks = Checks::default();
    let mut csv = String::from("time,relative_l2_error,mc_std,tolerance\n");
    for (i, t) in times.iter().enumerate() {
        let exact = h.scale((-rate * (cfg.horizon - t)).exp());
        let theta = &sol.theta.fields[i];
        let err = relative_l2(theta, &exact);
        let nb = batches.len() as f64;
        let spread: f64 = batches
            .iter()
            .map(|b| b.fields[i].sub(theta).l2_norm().powi(2))
            .sum();
        let std = (spread / (nb * (nb - 1.0))).sqrt() / exact.l2_norm();
        let tol = (0.02f64).max(3.0 * std);
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt17(*t),
            fmt17(err),
            fmt17(std),
            fmt17(tol)
        );
        checks.le(format!("heat_error_t{i}"), err, tol);
        write_snapshot(
            &m.dir().join(format!("theta_{i}.csv")),
            theta,
            &prob.grid,
            *t,
        )?;
        m.record(&format!("theta_{i}.csv"));
    }
    m.artifact("heat_errors.csv", &csv)?;
    m.metric("max_point_std", sol.max_point_std());
    checks.finish(m)
}

/// Initial velocity of the NS runs: Taylor–Green or the rotation field.
pub fn ns_initial(kind: ManifoldKind, degree: usize) -> VectorFieldSpec {
    match kind {
        ManifoldKind::FlatTorus2 => VectorFieldSpec::taylor_green(degree, 1.0),
        ManifoldKind::UnitSphere2 => VectorFieldSpec::killing(degree, 1.0),
    }
}

pub fn ns_config(cfg: &RunConfig, v0: VectorFieldSpec) -> Result<NSConfig, CommandError> {
    let mut ns = NSConfig::new(v0, cfg.nu, cfg.horizon, cfg.nodes, resolution(cfg), mc(cfg));
    ns.laplacian = cfg.laplacian;
    ns.picard = NsPicard {
        max_iters: cfg.max_iters,
        tol: cfg.tol,
        p: cfg.p,
    };
    ns.grid = grid(cfg)?;
    Ok(ns)
}

fn trace_metrics(m: &mut RunManifest, trace: &PicardTrace) -> Result<(), CommandError> {
    m.artifact("picard_trace.csv", &trace.to_csv_untimed())?;
    m.metric("picard_distances", &trace.distances);
    m.metric("picard_norms", &trace.norms);
    m.metric("picard_wall_ms", &trace.wall_ms);
    m.metric("picard_mc_std", &trace.mc_std);
    m.metric("picard_iterations", trace.iterations());
    m.metric(
        "picard_monotone_after_burn_in",
        trace.monotone_after_burn_in,
    );
    Ok(())
}

/// Runs the Picard iteration; `Ok(None)` means it stopped without meeting
/// the tolerance.
fn run_ns(
    cfg: &RunConfig,
    m: &mut RunManifest,
) -> Result<(NSConfig, Option<NsSolution>), CommandError> {
    let ns = ns_config(cfg, ns_initial(cfg.manifold, cfg.degree))?;
    let out = m.phase("picard", || solve_ns(&ns));
    match out {
        Ok(sol) => {
            trace_metrics(m, &sol.trace)?;
            m.metric("converged", true);
            for (i, (s, v)) in sol
                .velocity
                .times
                .iter()
                .zip(&sol.velocity.fields)
                .enumerate()
            {
                let name = format!("velocity_{i}.csv");
                write_snapshot(&m.dir().join(&name), v, &ns.grid, *s)?;
                m.record(&name);
            }
            Ok((ns, Some(sol)))
        }
        Err(fail) => {
            trace_metrics(m, &fail.trace)?;
            m.metric("converged", false);
            match fail.error {
                CoreError::NoConvergence { .. } => {
                    println!("picard did not converge: {}", fail.error);
                    Ok((ns, None))
                }
                e => Err(e.into()),
            }
        }
    }
}

pub fn ns_solve(cfg: &RunConfig, m: &mut RunManifest) -> CommandResult {
    let (_, sol) = run_ns(cfg, m)?;
    let mut checks = Checks::default();
    let iters = m.metrics["picard_iterations"].as_u64().unwrap_or(0) as f64;
    checks.le("picard_iterations", iters, cfg.max_iters as f64);
    if sol.is_none() {
        checks.push("picard_converged".into(), 0.0, 1.0, false);
    }
    checks.finish(m)
}

/// Decay rate of the exact solution started from [`ns_initial`].
pub fn exact_rate(kind: ManifoldKind, laplacian: Laplacian, nu: f64) -> f64 {
    match (kind, laplacian) {
        (ManifoldKind::FlatTorus2, _) => 2.0 * nu,
        (ManifoldKind::UnitSphere2, Laplacian::Bochner) => nu,
        (ManifoldKind::UnitSphere2, Laplacian::HodgeDeRham) => 2.0 * nu,
    }
}

fn reference_times_step(times: &[f64]) -> f64 {
    let h = times[1] - times[0];
    h / (h / REFERENCE_DT).ceil()
}

pub fn ns_validate(cfg: &RunConfig, m: &mut RunManifest) -> CommandResult {
    let (ns, sol) = run_ns(cfg, m)?;
    let mut checks = Checks::default();
    let Some(sol) = sol else {
        checks.push("picard_converged".into(), 0.0, 1.0, false);
        return checks.finish(m);
    };
    checks.le(
        "picard_iterations",
        sol.trace.iterations() as f64,
        cfg.max_iters as f64,
    );
    let kind = cfg.manifold;
    let v0 = ns.v0.resized(cfg.degree);
    let rate = exact_rate(kind, cfg.laplacian, cfg.nu);
    let times = sol.velocity.times.clone();
    let reference = if cfg.reference && kind == ManifoldKind::FlatTorus2 {
        let dt = reference_times_step(&times);
        let r = m.phase("reference", || {
            torus_spectral_ns_at(&v0, cfg.nu, &times, dt, SpectralSettings::default())
        })?;
        Some(r)
    } else {
        None
    };
    let mut header =
        String::from("time,amplitude,exact_amplitude,amplitude_error,exact_field_error");
    if reference.is_some() {
        header.push_str(",reference_error");
    }
    let mut csv = header + "\n";
    let mut amps = Vec::new();
    let mut ref_err: f64 = 0.0;
    let mut amp_err = 0.0;
    for (i, s) in times.iter().enumerate() {
        let w = &sol.velocity.fields[i];
        let a = amplitude(w, &v0);
        let ae = (-rate * s).exp();
        amp_err = (a - ae).abs() / ae;
        let fe = relative_l2(w, &v0.scale(ae));
        let _ = write!(
            csv,
            "{},{},{},{},{}",
            fmt17(*s),
            fmt17(a),
            fmt17(ae),
            fmt17(amp_err),
            fmt17(fe)
        );
        if let Some(r) = &reference {
            let e = relative_l2(w, &r.fields[i]);
            ref_err = ref_err.max(e);
            let _ = write!(csv, ",{}", fmt17(e));
        }
        csv.push('\n');
        amps.push(a);
    }
    m.artifact("ns_errors.csv", &csv)?;
    let fitted = fit_decay_rate(&times, &amps);
    m.metric("amplitudes", &amps);
    m.metric("fitted_rate", fitted);
    m.metric("exact_rate", rate);
    m.metric("final_amplitude_error", amp_err);
    match kind {
        ManifoldKind::FlatTorus2 => {
            checks.le("final_amplitude_error", amp_err, 0.03);
            if reference.is_some() {
                m.metric("reference_error", ref_err);
                checks.le("reference_field_error", ref_err, 0.05);
            }
        }
        ManifoldKind::UnitSphere2 => {
            checks.le("decay_rate_error", (fitted - rate).abs() / rate, 0.05);
        }
    }
    checks.finish(m)
}

/// Forward drift used by the generator and variational diagnostics.
fn diagnostic_drift(kind: ManifoldKind) -> Box<dyn fbsde_geom::TimeVectorField> {
    match kind {
        ManifoldKind::FlatTorus2 => {
            let tg = VectorFieldSpec::taylor_green(2, 1.0);
            Box::new(Steady(move |p: &Point| tg.eval_point(p)))
        }
        // rotation plus the gradient field A_1
        ManifoldKind::UnitSphere2 => Box::new(Steady(|p: &Point| {
            let c = p.coords();
            Vector3::new(-c.y, c.x, 0.0)
                + embedding_field_components(ManifoldKind::UnitSphere2, c)[0]
        })),
    }
}

pub fn diagnostic_point(kind: ManifoldKind) -> Point {
    match kind {
        ManifoldKind::FlatTorus2 => Point::torus(0.7, 0.4),
        ManifoldKind::UnitSphere2 => Point::sphere_normalized(Vector3::new(0.3, -0.5, 0.8)),
    }
}

pub fn flow_diagnostics(cfg: &RunConfig, m: &mut RunManifest) -> CommandResult {
    let kind = cfg.manifold;
    let drift = diagnostic_drift(kind);
    let x0 = diagnostic_point(kind);
    let mut checks = Checks::default();

    let mut csv = String::from("function,estimate,exact,std_error,relative_error\n");
    let mut gens = Vec::new();
    for f in test_scalars(kind).iter() {
        let g = m.phase("generator", || {
            generator_check(
                f,
                &x0,
                drift.as_ref(),
                cfg.nu,
                cfg.dt,
                cfg.paths,
                cfg.seed,
                cfg.scheme,
            )
        });
        let _ = writeln!(
            csv,
            "{},{},{},{},{}",
            g.function,
            fmt17(g.estimate),
            fmt17(g.exact),
            fmt17(g.std_error),
            fmt17(g.relative_error)
        );
        checks.le(format!("generator[{}]", g.function), g.relative_error, 0.05);
        gens.push(g);
    }
    m.artifact("generator.csv", &csv)?;
    m.metric("generator", &gens);

    if kind == ManifoldKind::UnitSphere2 {
        let d = m.phase("coordinate_decay", || {
            coordinate_decay(&x0, cfg.nu, cfg.horizon, cfg.dt, cfg.samples, cfg.seed)
        });
        let mut csv = String::from("component,mean,std_error,exact\n");
        for (i, c) in ["x", "y", "z"].iter().enumerate() {
            let _ = writeln!(
                csv,
                "{c},{},{},{}",
                fmt17(d.mean[i]),
                fmt17(d.std_error[i]),
                fmt17(d.exact[i])
            );
        }
        m.artifact("coordinate_decay.csv", &csv)?;
        checks.le("coordinate_decay_z_score", d.max_z_score(), 3.0);
        m.metric("coordinate_decay", &d);
    }

    // Orders from halving ε at fine dt, and halving dt at tiny ε.
    let h = cfg.horizon / 25.0;
    let runs = [
        (cfg.dt, 0, 0.1),
        (cfg.dt, 0, 0.05),
        (h / 2.0, 1, 1e-6),
        (h / 2.0, 0, 1e-6),
    ];
    let errs: Vec<_> = m.phase("variational", || {
        runs.iter()
            .map(|&(dt, r, eps)| {
                variational_errors(
                    &x0,
                    drift.as_ref(),
                    cfg.nu,
                    cfg.horizon,
                    dt,
                    r,
                    eps,
                    VARIATIONAL_PATHS,
                    cfg.seed,
                )
            })
            .collect()
    });
    let mut csv = String::from("eps,dt,mean_error,std_error\n");
    for e in &errs {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt17(e.eps),
            fmt17(e.dt),
            fmt17(e.mean_error),
            fmt17(e.std_error)
        );
    }
    m.artifact("variational.csv", &csv)?;
    let eps_order = (errs[0].mean_error / errs[1].mean_error).log2();
    let dt_order = (errs[2].mean_error / errs[3].mean_error).log2();
    checks.ge("variational_eps_order", eps_order, 0.9);
    checks.ge("variational_dt_order", dt_order, 0.9);
    m.metric("variational", &errs);
    m.metric("variational_eps_order", eps_order);
    m.metric("variational_dt_order", dt_order);
    checks.finish(m)
}

/// The pair `(w₁, 0.9 w₁)` probed by `contraction-probe`.
pub fn contraction_pair(kind: ManifoldKind, degree: usize) -> (VectorFieldSpec, VectorFieldSpec) {
    let w1 = match kind {
        ManifoldKind::FlatTorus2 => VectorFieldSpec::taylor_green(degree, 1.0),
        ManifoldKind::UnitSphere2 => {
            // rotation field plus a degree-2 stream function
            let mut psi = SphereScalar::zeros(degree.max(2));
            psi.set(1, 0, -(4.0 * std::f64::consts::PI / 3.0).sqrt());
            psi.set(2, 1, 0.5);
            VectorFieldSpec::Sphere(SphereVector {
                phi: SphereScalar::zeros(psi.l),
                psi,
            })
        }
    };
    let w2 = w1.scale(0.9);
    (w1, w2)
}

pub fn contraction(cfg: &RunConfig, m: &mut RunManifest) -> CommandResult {
    let (w1, w2) = contraction_pair(cfg.manifold, cfg.degree);
    let ns = ns_config(cfg, w1.clone())?;
    let f1 = TimeField::constant(ns.time_nodes.clone(), &w1.resized(cfg.degree))?;
    let f2 = TimeField::constant(ns.time_nodes.clone(), &w2.resized(cfg.degree))?;
    let rep = m.phase("probe", || contraction_probe(&f1, &f2, &ns))?;
    let mut csv = String::from("time,numerator,denominator\n");
    for (s, a, b) in &rep.per_time {
        let _ = writeln!(csv, "{},{},{}", fmt17(*s), fmt17(*a), fmt17(*b));
    }
    m.artifact("contraction.csv", &csv)?;
    m.metric("ratio", rep.ratio);
    m.metric("numerator", rep.numerator);
    m.metric("denominator", rep.denominator);
    let mut checks = Checks::default();
    checks.push("contraction_ratio".into(), rep.ratio, 1.0, rep.ratio < 1.0);
    if rep.ratio >= 1.0 {
        log::warn!(
            "Picard map is not contractive at T = {}: ratio {:.4}",
            cfg.horizon,
            rep.ratio
        );
    }
    checks.finish(m)
}
