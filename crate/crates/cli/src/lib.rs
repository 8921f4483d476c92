//! The `convdiag` command-line tool: runs transient simulations with
//! solver diagnostics, parameter and step-size sweeps, and the Rosenbrock
//! spectrum demonstration, writing CSV reports and a JSON manifest.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fault;
mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use convdiag::circuit::{
    self, parse_netlist, serialize_netlist, Netlist, BRIDGE_DT, POWER_CHANNEL_DT,
};
use convdiag::diagnostics::{default_probe_step, linearize_map_probe, SolverMap};
use convdiag::error::{NetlistFormatError, StepperError};
use convdiag::homotopy::{
    self, parse_value_range, stepsize_sweep, sweep_parameter, BdfOrder, DiagModes, StepStatus,
    StepperConfig, StepsizeSweepConfig,
};
use convdiag::linalg;
use convdiag::nlsolve::{rosenbrock_system, JacobianMode, ResidualSystem, SolverConfig};
use nalgebra::DVector;
use serde::Serialize;
use thiserror::Error;

pub use fault::parse_fault;
use output::{Manifest, OutDir};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARSE: u8 = 1;
pub const EXIT_VALIDATION: u8 = 2;
pub const EXIT_SOLVER_FAILURE: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    /// Input that could not be read or understood.
    #[error("{0}")]
    Parse(String),
    /// Well-formed input with values the library rejects.
    #[error("{0}")]
    Validation(String),
    #[error("writing {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => EXIT_PARSE,
            CliError::Validation(_) | CliError::Output { .. } => EXIT_VALIDATION,
        }
    }
}

impl From<NetlistFormatError> for CliError {
    fn from(e: NetlistFormatError) -> Self {
        match e {
            NetlistFormatError::Serialize(_) => CliError::Validation(e.to_string()),
            _ => CliError::Parse(e.to_string()),
        }
    }
}

impl From<StepperError> for CliError {
    fn from(e: StepperError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "convdiag",
    version,
    about = "Solver convergence diagnostics for circuit transients"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate a circuit and record per-step solver diagnostics.
    Simulate(RunArgs),
    /// Sweep the time-step size or the diode minimum-conductance resistance.
    Sweep(SweepArgs),
    /// Spectrum of a Newton variant linearized at the Rosenbrock minimum.
    Rosenbrock(RosenbrockArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct RunArgs {
    /// Netlist file, or one of the built-in fixture names.
    #[arg(long, value_name = "PATH|FIXTURE")]
    netlist: String,
    /// Extra fault, `ID:flip` or `ID:scale:FACTOR`. Repeatable.
    #[arg(long = "fault", value_name = "SPEC")]
    faults: Vec<String>,
    /// Step size in seconds. Fixtures default to their reference step.
    #[arg(long, value_name = "SECONDS")]
    dt: Option<f64>,
    #[arg(long, value_name = "SECONDS", default_value_t = 20e-3)]
    t_end: f64,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2), default_value_t = 1)]
    order: u8,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = 20)]
    max_iter: usize,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Comma-separated subset of `probe,dmd`, or `none`.
    #[arg(long, value_name = "LIST", default_value = "probe,dmd")]
    diag: String,
    #[arg(long, value_name = "REAL", default_value_t = convdiag::localize::DEFAULT_RELATIVE_THRESHOLD)]
    localize_threshold: f64,
    /// Resistance placed across every diode; overrides the netlist.
    #[arg(long, value_name = "OHMS")]
    gmin: Option<f64>,
    /// Distance from the baseline center inside which eigenvalues count as
    /// the cluster.
    #[arg(long, value_name = "REAL")]
    cluster_radius: Option<f64>,
    /// Smallest |λ| an off-cluster eigenvalue needs to count as an outlier.
    #[arg(long, value_name = "REAL")]
    anomaly_threshold: Option<f64>,
    /// Eigenpairs kept per report.
    #[arg(long, default_value_t = 4)]
    eig_count: usize,
    #[arg(long, value_name = "PATH", default_value = "convdiag-out")]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum SweepMode {
    Dt,
    Gmin,
}

#[derive(Debug, Clone, Args, Serialize)]
struct SweepArgs {
    #[command(flatten)]
    #[serde(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    mode: SweepMode,
    /// `START:STOP:log|lin[:COUNT]`; step sizes in dt mode, ohms in gmin mode.
    #[arg(long, value_name = "RANGE")]
    values: String,
    /// dt mode: start candidate steps from every N-th base state.
    #[arg(long, default_value_t = 1)]
    stride: usize,
    /// dt mode: Newton iteration cap for candidate steps; defaults to
    /// `--max-iter`.
    #[arg(long)]
    cell_max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum JacobianChoice {
    Analytic,
    Fd,
}

#[derive(Debug, Clone, Args, Serialize)]
struct RosenbrockArgs {
    #[arg(long, value_enum, default_value_t = JacobianChoice::Analytic)]
    jacobian: JacobianChoice,
    /// Forward-difference step for `--jacobian fd`.
    #[arg(long, default_value_t = 0.01)]
    fd_h: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    dimension: usize,
    #[arg(long, value_name = "PATH", default_value = "convdiag-out")]
    out_dir: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<String> = args
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_PARSE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, &argv),
        Command::Sweep(a) => sweep(&a, &argv),
        Command::Rosenbrock(a) => rosenbrock(&a, &argv),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("convdiag: {e}");
            e.exit_code()
        }
    }
}

/// A resolved `--netlist` argument.
#[derive(Debug, Serialize)]
struct NetlistInput {
    source: String,
    fixture: bool,
    /// SHA-256 of the file bytes, or of the canonical text for fixtures.
    sha256: String,
    #[serde(skip)]
    netlist: Netlist,
    #[serde(skip)]
    default_dt: Option<f64>,
}

fn load_netlist(spec: &str) -> Result<NetlistInput, CliError> {
    if let Some(netlist) = circuit::fixture(spec) {
        let text = serialize_netlist(&netlist)?;
        let default_dt = if spec.starts_with("bridge") {
            BRIDGE_DT
        } else {
            POWER_CHANNEL_DT
        };
        return Ok(NetlistInput {
            source: spec.to_string(),
            fixture: true,
            sha256: output::sha256_hex(text.as_bytes()),
            netlist,
            default_dt: Some(default_dt),
        });
    }
    let bytes = std::fs::read(spec).map_err(|e| {
        CliError::Parse(format!(
            "netlist `{spec}` is neither a fixture ({}) nor a readable file: {e}",
            circuit::FIXTURE_NAMES.join(", ")
        ))
    })?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::Parse(format!("netlist `{spec}` is not UTF-8")))?;
    Ok(NetlistInput {
        source: spec.to_string(),
        fixture: false,
        sha256: output::sha256_hex(&bytes),
        netlist: parse_netlist(text)?,
        default_dt: None,
    })
}

fn parse_diag(list: &str) -> Result<DiagModes, CliError> {
    let mut modes = DiagModes::NONE;
    if list.trim() == "none" {
        return Ok(modes);
    }
    for item in list.split(',').map(str::trim) {
        match item {
            "probe" => modes.probe = true,
            "dmd" => modes.dmd = true,
            other => {
                return Err(CliError::Parse(format!(
                    "--diag: unknown method `{other}` (expected probe, dmd or none)"
                )))
            }
        }
    }
    Ok(modes)
}

/// The netlist with `--gmin` and `--fault` applied, and the effective
/// stepper configuration.
fn prepare(a: &RunArgs) -> Result<(NetlistInput, Netlist, StepperConfig), CliError> {
    let input = load_netlist(&a.netlist)?;
    let mut netlist = input.netlist.clone();
    if a.gmin.is_some() {
        netlist.gmin_ohms = a.gmin;
    }
    for f in &a.faults {
        netlist.faults.push(parse_fault(f)?);
    }
    let dt =
        a.dt.or(input.default_dt)
            .ok_or_else(|| CliError::Validation("--dt is required for netlist files".into()))?;
    let mut cfg = StepperConfig::new(dt, a.t_end);
    cfg.order = BdfOrder::from_u8(a.order).expect("clap restricts the order");
    cfg.solver = SolverConfig {
        tol: a.tol,
        max_iter: a.max_iter,
        alpha: a.alpha,
        ..SolverConfig::default()
    };
    cfg.diag = parse_diag(&a.diag)?;
    cfg.localize.relative_threshold = a.localize_threshold;
    if let Some(r) = a.cluster_radius {
        cfg.anomaly.cluster_radius = r;
    }
    if let Some(t) = a.anomaly_threshold {
        cfg.anomaly.anomaly_threshold = t;
    }
    cfg.eig_count = a.eig_count;
    cfg.validate()?;
    netlist
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok((input, netlist, cfg))
}

fn simulate(a: &RunArgs, argv: &[String]) -> Result<u8, CliError> {
    let (input, netlist, cfg) = prepare(a)?;
    let report = homotopy::run(&netlist, &[], &cfg)?;
    let failed = report
        .final_step()
        .is_some_and(|s| s.status == StepStatus::SolverFailed);
    let code = if failed { EXIT_SOLVER_FAILURE } else { EXIT_OK };

    let mut out = OutDir::create(&a.out_dir)?;
    let circuit = circuit::assemble(&netlist).map_err(|e| CliError::Validation(e.to_string()))?;
    out.write_run(&report, &circuit)?;
    let mut manifest = Manifest::new("simulate", argv, code);
    manifest.set("args", a);
    manifest.set("config", &cfg);
    manifest.set("netlist_input", &input);
    manifest.set("netlist", &serialize_netlist(&netlist)?);
    manifest.set("terminated_early", &report.terminated_early);
    out.finish(manifest)?;
    match &report.terminated_early {
        Some(why) => eprintln!("convdiag: {why}"),
        None => eprintln!("convdiag: completed {} steps", report.steps.len()),
    }
    Ok(code)
}

fn sweep(a: &SweepArgs, argv: &[String]) -> Result<u8, CliError> {
    let (input, netlist, cfg) = prepare(&a.run)?;
    let range = parse_value_range(&a.values).map_err(|e| CliError::Parse(e.to_string()))?;
    let values = range.values();
    let mut out = OutDir::create(&a.run.out_dir)?;
    let mut manifest = Manifest::new("sweep", argv, EXIT_OK);
    match a.mode {
        SweepMode::Gmin => {
            if let Some(v) = values.iter().find(|v| !(**v > 0.0)) {
                return Err(CliError::Validation(format!(
                    "gmin resistance must be > 0, got {v}"
                )));
            }
            let sweep = sweep_parameter(
                |r| {
                    let mut n = netlist.clone();
                    n.gmin_ohms = Some(r);
                    n
                },
                &values,
                &cfg,
            )?;
            out.write_gmin_sweep(&sweep, cfg.order)?;
            manifest.set("config", &cfg);
        }
        SweepMode::Dt => {
            let mut sc = StepsizeSweepConfig::new(cfg, values);
            sc.stride = a.stride;
            if let Some(n) = a.cell_max_iter {
                sc.cell_solver.max_iter = n;
            }
            let sweep = stepsize_sweep(&netlist, &[], &sc)?;
            out.write_stepsize_sweep(&sweep)?;
            manifest.set("config", &cfg);
            manifest.set("cell_solver", &sc.cell_solver);
            manifest.set("base_terminated_early", &sweep.base.terminated_early);
        }
    }
    manifest.set("args", a);
    manifest.set("values", &range.to_string());
    manifest.set("netlist_input", &input);
    manifest.set("netlist", &serialize_netlist(&netlist)?);
    out.finish(manifest)?;
    Ok(EXIT_OK)
}

fn rosenbrock(a: &RosenbrockArgs, argv: &[String]) -> Result<u8, CliError> {
    if a.dimension < 2 {
        return Err(CliError::Validation(format!(
            "--dimension must be >= 2, got {}",
            a.dimension
        )));
    }
    let solver = SolverConfig {
        alpha: a.alpha,
        jacobian_mode: match a.jacobian {
            JacobianChoice::Analytic => JacobianMode::Implemented,
            JacobianChoice::Fd => JacobianMode::ForwardFd { h: a.fd_h },
        },
        ..SolverConfig::default()
    };
    solver
        .validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let sys = rosenbrock_system(a.dimension);
    let ones = DVector::from_element(a.dimension, 1.0);
    let failed = |e: &dyn std::fmt::Display| CliError::Validation(format!("spectrum: {e}"));
    let hessian = linalg::eigenvalues(&sys.jacobian(&ones)).map_err(|e| failed(&e))?;
    let map = SolverMap::new(&sys, solver);
    let m = linearize_map_probe(&map, &ones, default_probe_step(&ones)).map_err(|e| failed(&e))?;
    let spectrum = linalg::eigenvalues(&m).map_err(|e| failed(&e))?;

    let mut out = OutDir::create(&a.out_dir)?;
    out.write_spectrum("spectrum.csv", &spectrum)?;
    out.write_spectrum("hessian_spectrum.csv", &hessian)?;
    let mut manifest = Manifest::new("rosenbrock", argv, EXIT_OK);
    manifest.set("args", a);
    manifest.set("solver", &solver);
    out.finish(manifest)?;
    let lead = spectrum.first().map_or(0.0, |l| l.norm());
    eprintln!("convdiag: leading |λ| = {lead:e}");
    Ok(EXIT_OK)
}
