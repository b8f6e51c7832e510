//! Command-line driver for the tracereg simulations.
//!
//! Exit codes: 0 on success, 1 on a numerical failure, 2 on a configuration
//! error, 3 on an IO error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiments;
pub mod output;
pub mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use tracereg::rng::substream;
use tracereg::sampling::{generate_dataset, generate_ground_truth, EnsembleSpec};

use config::{Experiment, RawConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] tracereg::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Core(tracereg::Error::Argument(_) | tracereg::Error::Dimension(_)) => 2,
            CliError::Core(_) => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tracereg", version, about = "Low-rank trace regression simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Relative error of theory, oracle and cross-validated λ choices.
    Figure1(RunArgs),
    /// Noiseless recovery by nuclear-norm minimization.
    ExactRecovery(RunArgs),
    /// Restricted strong convexity probe; prints JSON lines.
    RscProbe(RunArgs),
    /// λ₀ calibration for multipliers 1, 2, 3; prints JSON lines.
    Calibration(RunArgs),
    /// Write one synthetic dataset.
    GenerateDataset(GenerateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// key = value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// mc-plain, mc-gaussian, mc-deterministic, multitask, gaussian or factored.
    #[arg(long)]
    pub ensemble: Option<String>,
    #[arg(long)]
    pub d: Option<String>,
    #[arg(long)]
    pub r: Option<String>,
    #[arg(long)]
    pub sigma: Option<String>,
    /// Comma-separated, strictly increasing sample sizes.
    #[arg(long = "n")]
    pub n_grid: Option<String>,
    #[arg(long)]
    pub replicates: Option<String>,
    #[arg(long)]
    pub k_folds: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Comma-separated subset of theory1, theory2, theory3, oracle, cv.
    #[arg(long)]
    pub estimators: Option<String>,
    #[arg(long)]
    pub out_dir: Option<String>,
    #[arg(long)]
    pub calib_reps: Option<String>,
    #[arg(long)]
    pub quantile: Option<String>,
    #[arg(long)]
    pub trials: Option<String>,
    #[arg(long)]
    pub sketch_reps: Option<String>,
    /// 100 replicates unless set explicitly.
    #[arg(long)]
    pub paper_scale: bool,
    /// Record wall-clock milliseconds per estimate.
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "mc-plain")]
    pub ensemble: String,
    #[arg(long, default_value_t = 50)]
    pub d: usize,
    #[arg(long, default_value_t = 2)]
    pub r: usize,
    #[arg(long = "n", default_value_t = 1250)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dataset file to write.
    #[arg(long)]
    pub output: PathBuf,
    /// Optional file for the ground-truth matrix, one row per line.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

impl RunArgs {
    /// Resolve file and flags into a configuration for `experiment`.
    pub fn resolve(&self, experiment: Experiment) -> Result<config::ExperimentConfig, CliError> {
        let file = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|source| CliError::Io { path: p.clone(), source })?;
                RawConfig::parse(&text)?
            }
            None => RawConfig::default(),
        };
        let mut flags = RawConfig { paper_scale: self.paper_scale, ..Default::default() };
        flags.set("experiment", experiment.name())?;
        let pairs = [
            ("ensemble", &self.ensemble),
            ("d", &self.d),
            ("r", &self.r),
            ("sigma", &self.sigma),
            ("n_grid", &self.n_grid),
            ("replicates", &self.replicates),
            ("k_folds", &self.k_folds),
            ("seed", &self.seed),
            ("estimators", &self.estimators),
            ("out_dir", &self.out_dir),
            ("calib_reps", &self.calib_reps),
            ("quantile", &self.quantile),
            ("trials", &self.trials),
            ("sketch_reps", &self.sketch_reps),
        ];
        for (k, v) in pairs {
            if let Some(v) = v {
                flags.set(k, v.clone())?;
            }
        }
        if self.timing {
            flags.set("timing", "true")?;
        }
        file.merge(flags).resolve()
    }
}

fn generate(args: &GenerateArgs, mut out: impl Write) -> Result<(), CliError> {
    let kind = EnsembleSpec::kind_from_tag(&args.ensemble).map_err(|e| CliError::Config(e.to_string()))?;
    let spec = EnsembleSpec::square(kind, args.d)?;
    let mut g = substream(args.seed, &[0]);
    let b_star = generate_ground_truth(args.d, args.d, args.r, &mut g)?;
    let ds = generate_dataset(&spec, &b_star, args.n, args.sigma, args.seed)?;
    let io = |path: &PathBuf| {
        let path = path.clone();
        move |source| CliError::Io { path, source }
    };
    let mut buf = Vec::new();
    ds.write_to(&mut buf).map_err(io(&args.output))?;
    fs::write(&args.output, buf).map_err(io(&args.output))?;
    if let Some(t) = &args.truth {
        let body: String = (0..b_star.rows())
            .map(|i| b_star.row(i).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ") + "\n")
            .collect();
        fs::write(t, body).map_err(io(t))?;
    }
    writeln!(out, "wrote {} observations to {}", ds.n(), args.output.display()).map_err(io(&args.output))?;
    Ok(())
}

/// Run a parsed command, writing progress and JSON lines to `out`.
pub fn execute(cli: &Cli, mut out: impl Write) -> Result<(), CliError> {
    let stdout_err = |source| CliError::Io { path: PathBuf::from("<stdout>"), source };
    match &cli.command {
        Command::Figure1(a) | Command::ExactRecovery(a) => {
            let exp = if matches!(cli.command, Command::Figure1(_)) { Experiment::Figure1 } else { Experiment::ExactRecovery };
            let cfg = a.resolve(exp)?;
            let records = match exp {
                Experiment::Figure1 => experiments::run_figure1(&cfg)?,
                _ => experiments::run_exact_recovery(&cfg)?,
            };
            let summary = experiments::summarize(&records);
            let paths = output::emit_outputs(&records, &summary, &cfg)?;
            for row in &summary {
                writeln!(out, "{:<10} n={:<7} mean={:.6e} 2se={:.2e} count={}", row.estimator, row.n, row.mean, row.two_se, row.count)
                    .map_err(stdout_err)?;
            }
            writeln!(out, "records: {}", paths.records.display()).map_err(stdout_err)?;
        }
        Command::RscProbe(a) => {
            let cfg = a.resolve(Experiment::RscProbe)?;
            let lines = experiments::run_rsc_probe(&cfg)?;
            output::emit_json_lines(&lines, &cfg, &mut out)?;
        }
        Command::Calibration(a) => {
            let cfg = a.resolve(Experiment::Calibration)?;
            let lines = experiments::run_calibration(&cfg)?;
            output::emit_json_lines(&lines, &cfg, &mut out)?;
        }
        Command::GenerateDataset(g) => generate(g, &mut out)?,
    }
    Ok(())
}

/// Parse `args` (program name first) and run; returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli, io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("tracereg: {e}");
            e.exit_code()
        }
    }
}
