//! Argument parsing and subcommand dispatch.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use super::config::RunConfig;
use super::output::{write_outputs, RunMetadata};
use crate::error::{Error, Result};
use crate::harness::{
    energy_growth_test, paper_experiment_config, paper_initial_density, run_ensemble, EnsembleStats, ExperimentOptions,
    Regime, SchemeSpec,
};
use crate::problem::SchemeKind;
use crate::stability::{log_space, scan_stability};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BLOWUP: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "smm", version, about = "Stochastic micro-macro kinetic transport simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// TOML configuration file; defaults apply when absent.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a key, e.g. `--set scheme.epsilon=0.1`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory, overriding `output.dir`.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p, &self.overrides)?,
            None => RunConfig::from_toml_with_overrides("", &self.overrides)?,
        };
        if let Some(dir) = &self.output {
            cfg.output.dir = dir.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RegimeArg {
    /// ε = 1 against the explicit kinetic scheme.
    Kinetic,
    /// ε = 1e-2 against Crank–Nicolson.
    Diffusive,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SchemeArg {
    Smm,
    Telegraph,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an ensemble of `scheme.kind` and write mean/variance tables.
    Simulate(ConfigArgs),
    /// Run `scheme.kind` path-coupled with `scheme.compare_with`.
    Compare {
        #[command(flatten)]
        args: ConfigArgs,
        /// Fail with exit code 4 when a mean gap exceeds this value.
        #[arg(long)]
        max_gap: Option<f64>,
    },
    /// Reproduce the kinetic or diffusive regime experiment.
    PaperExperiment {
        #[arg(long, value_enum)]
        regime: RegimeArg,
        #[arg(long, default_value_t = 100)]
        realizations: usize,
        #[arg(long, default_value_t = 200)]
        num_cells: usize,
        /// Total noise mode count (constant plus Fourier modes).
        #[arg(long, default_value_t = 201)]
        num_modes: usize,
        #[arg(long, default_value_t = 20_240_101)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, short, default_value = "out")]
        output: PathBuf,
        /// Fail with exit code 4 when a mean gap exceeds this value.
        #[arg(long)]
        max_gap: Option<f64>,
    },
    /// Von Neumann scan of the telegraph scheme; exit code 4 on a violation.
    StabilityScan {
        #[arg(long, default_value_t = 1e-6)]
        dt_min: f64,
        #[arg(long, default_value_t = 1e-2)]
        dt_max: f64,
        #[arg(long, default_value_t = 41)]
        dt_count: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.05, 0.01, 0.005])]
        dx: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1.0, 1e-1, 1e-2, 1e-4])]
        epsilon: Vec<f64>,
        #[arg(long, default_value_t = 201)]
        theta_samples: usize,
        /// CSV destination; stdout when absent.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Ensemble energy growth under step halving; exit code 4 on failure.
    EnergyTest {
        #[arg(long, value_enum, default_value = "telegraph")]
        scheme: SchemeArg,
        #[arg(long, default_value_t = 200)]
        realizations: usize,
        /// Total noise mode count; 1 is the constant mode alone.
        #[arg(long, default_value_t = 1)]
        num_modes: usize,
        #[arg(long, default_value_t = 200)]
        num_cells: usize,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 20_240_101)]
        seed: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 2.0)]
        max_rate: f64,
        /// Largest accepted relative change of the rate under dt halving.
        #[arg(long, default_value_t = 0.2)]
        tolerance: f64,
    },
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::Precondition(_) | Error::Dimension { .. } | Error::Alignment { .. } => {
            EXIT_CONFIG
        }
        Error::BlowUp { .. } | Error::EnsembleFailed { .. } | Error::Numerical(_) => EXIT_BLOWUP,
        Error::Io(_) => EXIT_IO,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
pub fn main_with_args<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn config_echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn report_gaps(out: &mut dyn Write, stats: &EnsembleStats, max_gap: Option<f64>) -> Result<i32> {
    let mut code = EXIT_OK;
    for k in 1..stats.schemes.len() {
        for (t, time) in stats.output_times.iter().enumerate() {
            let gap = stats.mean_gap(0, k, t);
            let verdict = match max_gap {
                Some(tol) if gap.is_nan() || gap > tol => {
                    code = EXIT_CHECK_FAILED;
                    " FAIL"
                }
                Some(_) => " ok",
                None => "",
            };
            writeln!(
                out,
                "t = {time:<10} gap({} vs {}) = {gap:.3e}{verdict}",
                stats.schemes[0].kind, stats.schemes[k].kind
            )?;
        }
    }
    Ok(code)
}

fn report_failures(out: &mut dyn Write, stats: &EnsembleStats) -> Result<()> {
    for s in &stats.schemes {
        if !s.failures.is_empty() {
            writeln!(
                out,
                "{}: {} of {} realizations failed",
                s.kind,
                s.failures.len(),
                stats.realizations
            )?;
        }
    }
    Ok(())
}

pub fn run(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Simulate(args) => {
            let cfg = args.load()?;
            let stats = run_ensemble(&cfg.ensemble(&[cfg.scheme.kind])?)?;
            let meta = RunMetadata::new("simulate", &stats, cfg.scheme.cfl_safety, config_echo(&cfg));
            let files = write_outputs(&cfg.output.dir, &stats, meta)?;
            report_failures(out, &stats)?;
            writeln!(
                out,
                "{}: dt = {:.6e}, {} files in {}",
                stats.schemes[0].kind,
                stats.schemes[0].dt,
                files.len(),
                cfg.output.dir.display()
            )?;
            Ok(EXIT_OK)
        }
        Command::Compare { args, max_gap } => {
            let cfg = args.load()?;
            let mut kinds = vec![cfg.scheme.kind];
            kinds.extend(
                cfg.scheme
                    .compare_with
                    .iter()
                    .copied()
                    .filter(|k| *k != cfg.scheme.kind),
            );
            let stats = run_ensemble(&cfg.ensemble(&kinds)?)?;
            let meta = RunMetadata::new("compare", &stats, cfg.scheme.cfl_safety, config_echo(&cfg));
            write_outputs(&cfg.output.dir, &stats, meta)?;
            report_failures(out, &stats)?;
            report_gaps(out, &stats, max_gap)
        }
        Command::PaperExperiment {
            regime,
            realizations,
            num_cells,
            num_modes,
            seed,
            workers,
            output,
            max_gap,
        } => {
            let regime = match regime {
                RegimeArg::Kinetic => Regime::KineticEps1,
                RegimeArg::Diffusive => Regime::DiffusiveEps1e2,
            };
            let opts = ExperimentOptions {
                num_cells,
                num_modes,
                realizations,
                master_seed: seed,
                workers,
                ..ExperimentOptions::default()
            };
            let cfg = paper_experiment_config(regime, &opts)?;
            let stats = run_ensemble(&cfg)?;
            let echo = serde_json::json!({
                "regime": regime,
                "num_cells": num_cells,
                "num_modes": num_modes,
                "realizations": realizations,
                "seed": seed,
                "epsilon": regime.epsilon(),
                "velocity_nodes": opts.velocity_nodes,
            });
            let meta = RunMetadata::new("paper-experiment", &stats, opts.cfl_safety, echo);
            write_outputs(&output, &stats, meta)?;
            report_failures(out, &stats)?;
            report_gaps(out, &stats, max_gap)
        }
        Command::StabilityScan {
            dt_min,
            dt_max,
            dt_count,
            dx,
            epsilon,
            theta_samples,
            output,
        } => {
            if !(dt_min > 0.0 && dt_max >= dt_min && dt_count > 0) {
                return Err(Error::config("dt", "need 0 < dt_min <= dt_max and dt_count >= 1"));
            }
            let report = scan_stability(&log_space(dt_min, dt_max, dt_count), &dx, &epsilon, theta_samples)?;
            match &output {
                Some(path) => std::fs::write(path, report.to_csv())?,
                None => out.write_all(report.to_csv().as_bytes())?,
            }
            let violations = report.violations().len();
            let q1 = report.min_q1_under_cfl();
            eprintln!(
                "{} points, {violations} violations under CFL, min Q(1) under CFL = {}",
                report.points.len(),
                q1.map_or("n/a".into(), |q| format!("{q:.3e}"))
            );
            Ok(if violations == 0 && q1.is_none_or(|q| q >= 0.0) {
                EXIT_OK
            } else {
                EXIT_CHECK_FAILED
            })
        }
        Command::EnergyTest {
            scheme,
            realizations,
            num_modes,
            num_cells,
            epsilon,
            seed,
            workers,
            horizon,
            max_rate,
            tolerance,
        } => {
            let kind = match scheme {
                SchemeArg::Smm => SchemeKind::Smm,
                SchemeArg::Telegraph => SchemeKind::Telegraph,
            };
            let mut cfg = RunConfig::default();
            cfg.grid.num_cells = num_cells;
            cfg.scheme.epsilon = epsilon;
            cfg.scheme.kind = kind;
            cfg.noise.num_modes = num_modes;
            cfg.noise.master_seed = seed;
            cfg.ensemble.realizations = realizations;
            cfg.ensemble.workers = workers;
            if kind == SchemeKind::Telegraph {
                cfg.velocity.kind = crate::grid::QuadratureKind::TwoPoint;
            }
            cfg.validate()?;
            let problem = cfg.problem()?;
            let rho0 = paper_initial_density(problem.grid());
            let spec = SchemeSpec::new(kind, problem);
            let r = energy_growth_test(&spec, &rho0, horizon, realizations, seed, workers)?;
            writeln!(
                out,
                "{kind}: dt = {:.4e}, L = {:.4}, L(dt/2) = {:.4}, change = {:.2}%",
                r.dt,
                r.rate,
                r.rate_half_dt,
                100.0 * r.relative_change
            )?;
            let ok = r.rate <= max_rate && r.rate_half_dt <= max_rate && r.relative_change <= tolerance;
            Ok(if ok { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
    }
}
