//! Command-line front end for the stochastic Navier–Stokes solver.
//!
//! Exit codes: 0 all tolerances pass, 1 a tolerance fails, 2 usage or
//! configuration error, 3 numerical abort.

pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod logger;
pub mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use fbsde_core::ns_solver::Laplacian;
use fbsde_core::sde_engine::Scheme;
use fbsde_geom::ManifoldKind;

use crate::commands::CommandResult;
use crate::config::{load_layer, resolve, ConfigLayer, RunConfig};
use crate::manifest::{RunManifest, Status};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ABORT: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "fbsde-ns",
    version,
    about = "Stochastic Navier–Stokes solver on the flat torus and the unit sphere"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Embedding-field identities, scalarization, transport and Leray checks.
    ValidateGeometry(Flags),
    /// Tensor heat equation by the backward estimator against its exact solution.
    Heat(Flags),
    /// Picard iteration for Navier–Stokes; writes the trace and velocity snapshots.
    NsSolve(Flags),
    /// `ns-solve` plus error tables against exact and spectral references.
    NsValidate(Flags),
    /// Generator, coordinate-decay and variational-flow checks of the forward scheme.
    FlowDiagnostics(Flags),
    /// Measured Lipschitz ratio of one Picard sweep for a fixed field pair.
    ContractionProbe(Flags),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ValidateGeometry(_) => "validate-geometry",
            Command::Heat(_) => "heat",
            Command::NsSolve(_) => "ns-solve",
            Command::NsValidate(_) => "ns-validate",
            Command::FlowDiagnostics(_) => "flow-diagnostics",
            Command::ContractionProbe(_) => "contraction-probe",
        }
    }

    fn flags(&self) -> &Flags {
        match self {
            Command::ValidateGeometry(f)
            | Command::Heat(f)
            | Command::NsSolve(f)
            | Command::NsValidate(f)
            | Command::FlowDiagnostics(f)
            | Command::ContractionProbe(f) => f,
        }
    }
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// TOML or JSON config file (`.json` selects JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// torus2 or sphere2.
    #[arg(long, value_parser = parse_enum::<ManifoldKind>)]
    manifold: Option<ManifoldKind>,
    #[arg(long, allow_negative_numbers = true)]
    nu: Option<f64>,
    /// Horizon.
    #[arg(long = "T", allow_negative_numbers = true)]
    horizon: Option<f64>,
    /// Fourier degree K (torus) or harmonic degree L (sphere).
    #[arg(long, allow_negative_numbers = true)]
    degree: Option<i64>,
    /// Monte-Carlo paths per point.
    #[arg(long, allow_negative_numbers = true)]
    paths: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    max_iters: Option<i64>,
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
    /// Integrability exponent of the Picard norms.
    #[arg(long, allow_negative_numbers = true)]
    p: Option<f64>,
    /// bochner or hodge-de-rham.
    #[arg(long, value_parser = parse_enum::<Laplacian>)]
    laplacian: Option<Laplacian>,
    /// exact-geodesic-heun or projected-euler.
    #[arg(long, value_parser = parse_enum::<Scheme>)]
    scheme: Option<Scheme>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Compare against the spectral reference where available.
    #[arg(long)]
    reference: Option<bool>,
    /// Number of equally spaced time nodes.
    #[arg(long, allow_negative_numbers = true)]
    nodes: Option<i64>,
    /// Random samples for identity checks; paths for coordinate decay.
    #[arg(long, allow_negative_numbers = true)]
    samples: Option<i64>,
    /// Worker threads (0: all cores).
    #[arg(long, allow_negative_numbers = true)]
    threads: Option<i64>,
    /// Collocation grid size per axis (0: fit grid of the degree).
    #[arg(long, allow_negative_numbers = true)]
    grid: Option<i64>,
    /// Echo info-level log messages.
    #[arg(short, long)]
    verbose: bool,
}

impl Flags {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            manifold: self.manifold,
            nu: self.nu,
            horizon: self.horizon,
            degree: self.degree,
            paths: self.paths,
            dt: self.dt,
            seed: self.seed,
            max_iters: self.max_iters,
            tol: self.tol,
            p: self.p,
            laplacian: self.laplacian,
            scheme: self.scheme,
            out: self.out.clone(),
            reference: self.reference,
            nodes: self.nodes,
            samples: self.samples,
            threads: self.threads,
            grid: self.grid,
        }
    }
}

fn execute(command: &Command, cfg: &RunConfig, m: &mut RunManifest) -> CommandResult {
    match command {
        Command::ValidateGeometry(_) => commands::validate_geometry(cfg, m),
        Command::Heat(_) => commands::heat(cfg, m),
        Command::NsSolve(_) => commands::ns_solve(cfg, m),
        Command::NsValidate(_) => commands::ns_validate(cfg, m),
        Command::FlowDiagnostics(_) => commands::flow_diagnostics(cfg, m),
        Command::ContractionProbe(_) => commands::contraction(cfg, m),
    }
}

/// Parses `args` (including the program name), runs the subcommand and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_PASS
            };
        }
    };
    let flags = cli.command.flags();
    logger::install(if flags.verbose {
        log::LevelFilter::Info
    } else {
        log::LevelFilter::Warn
    });
    let file = match flags.config.as_deref().map(load_layer).transpose() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: config: {e}");
            return EXIT_USAGE;
        }
    };
    let resolved = match resolve(file.as_ref(), &flags.layer()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: config: {e}");
            return EXIT_USAGE;
        }
    };
    let cfg = resolved.config.clone();
    let mut manifest = match RunManifest::start(cli.command.name(), &resolved) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", cfg.out.display());
            return EXIT_USAGE;
        }
    };
    // Drop warnings left over from earlier in-process runs.
    logger::take_warnings();

    let result = if cfg.threads > 0 {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
        {
            Ok(pool) => pool.install(|| execute(&cli.command, &cfg, &mut manifest)),
            Err(e) => Err(commands::CommandError::Numerical(format!(
                "thread pool: {e}"
            ))),
        }
    } else {
        execute(&cli.command, &cfg, &mut manifest)
    };
    let (status, code) = match &result {
        Ok(true) => (Status::Pass, EXIT_PASS),
        Ok(false) => (Status::Fail, EXIT_FAIL),
        Err(e) => {
            eprintln!("error: {e}");
            manifest.error = Some(e.to_string());
            (Status::Aborted, EXIT_ABORT)
        }
    };
    if let Err(e) = manifest.finish(status, code, logger::take_warnings()) {
        eprintln!("error: cannot finalize manifest: {e}");
        return EXIT_ABORT;
    }
    println!(
        "{}: {} (manifest {})",
        cli.command.name(),
        match status {
            Status::Pass => "pass",
            Status::Fail => "tolerance failure",
            _ => "aborted",
        },
        manifest.dir().join(manifest::MANIFEST_FILE).display()
    );
    code
}
