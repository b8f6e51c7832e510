//! Experiment runners.
//!
//! Every replicate derives its randomness from `(seed, n, replicate)`, so
//! records do not depend on how the work pool schedules jobs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use tracereg::crossval::{cv_select, halving_grid, lambda_grid, make_folds};
use tracereg::linalg::Mat;
use tracereg::rng::{child_seed, substream};
use tracereg::sampling::{ensemble_constants, generate_dataset, generate_ground_truth, spikiness_norm, Dataset};
use tracereg::solvers::{lambda_max, solve_convex, solve_convex_from, solve_noiseless, ConvexEstimator, SolverConfig};
use tracereg::stats;
use tracereg::theory::{calibrate_lambda0, eta_for_rank, nu_from_lambda, quantile_rank, rsc_probe};

use crate::config::{EstimatorKind, Experiment, ExperimentConfig};
use crate::CliError;

/// Success threshold on the unsquared relative Frobenius error.
pub const RECOVERY_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub estimator: String,
    pub n: usize,
    pub replicate: usize,
    /// `‖B̂ − B★‖_F² / ‖B★‖_F²`.
    pub relative_error: f64,
    pub lambda_used: f64,
    pub converged: bool,
    pub seed: u64,
    pub wall_ms: u64,
    /// Exact recovery only.
    pub success: Option<bool>,
}

fn relative_error(b_hat: &Mat, b_star: &Mat) -> f64 {
    (b_hat - b_star).frobenius_sq() / b_star.frobenius_sq()
}

fn sort_records(records: &mut [ExperimentRecord]) {
    records.sort_by(|a, b| (&a.estimator, a.n, a.replicate).cmp(&(&b.estimator, b.n, b.replicate)));
}

const CALIBRATION_STREAM: u64 = u64::MAX;

fn calibration_path(cfg: &ExperimentConfig, n: usize) -> PathBuf {
    cfg.out_dir.join("calibration").join(format!(
        "{}-d{}-n{}-sigma{}-reps{}-seed{}.txt",
        cfg.spec().tag(),
        cfg.d,
        n,
        cfg.sigma,
        cfg.calib_reps,
        cfg.seed
    ))
}

fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.to_path_buf(), source }
}

/// Unscaled `‖Σ‖_op` draws for sample size `n`, read from the cache in
/// `out_dir` when present.
pub fn calibration_samples(cfg: &ExperimentConfig, n: usize) -> Result<Vec<f64>, CliError> {
    let path = calibration_path(cfg, n);
    if let Ok(text) = fs::read_to_string(&path) {
        let parsed: Result<Vec<f64>, _> = text.lines().map(str::parse::<f64>).collect();
        if let Ok(samples) = parsed {
            if samples.len() == cfg.calib_reps {
                return Ok(samples);
            }
        }
    }
    let seed = child_seed(cfg.seed, &[CALIBRATION_STREAM, n as u64]);
    let report = calibrate_lambda0(&cfg.spec(), n, cfg.sigma, 1.0, cfg.calib_reps, cfg.quantile, seed)?;
    let dir = path.parent().expect("cache file has a parent");
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let body: String = report.samples.iter().map(|s| format!("{s}\n")).collect();
    fs::write(&path, body).map_err(|e| io_err(&path, e))?;
    Ok(report.samples)
}

/// `λ₀` at multiplier 1 from cached or fresh calibration draws.
pub fn lambda0_base(cfg: &ExperimentConfig, n: usize) -> Result<f64, CliError> {
    let samples = calibration_samples(cfg, n)?;
    Ok(stats::kth_largest(&samples, quantile_rank(samples.len(), cfg.quantile)))
}

struct Replicate {
    b_star: Mat,
    ds: Dataset,
    seed: u64,
}

fn replicate(cfg: &ExperimentConfig, n: usize, rep: usize) -> Result<Replicate, CliError> {
    let seed = child_seed(cfg.seed, &[n as u64, rep as u64]);
    let mut g = substream(seed, &[0]);
    let b_star = generate_ground_truth(cfg.d, cfg.d, cfg.r, &mut g)?;
    let ds = generate_dataset(&cfg.spec(), &b_star, n, cfg.sigma, child_seed(seed, &[1]))?;
    Ok(Replicate { b_star, ds, seed })
}

fn timed<T>(timing: bool, f: impl FnOnce() -> Result<T, CliError>) -> Result<(T, u64), CliError> {
    let start = Instant::now();
    let out = f()?;
    let ms = if timing { start.elapsed().as_millis() as u64 } else { 0 };
    Ok((out, ms))
}

fn figure1_replicate(
    cfg: &ExperimentConfig,
    n: usize,
    rep: usize,
    lambda0: f64,
    solver: &SolverConfig,
) -> Result<Vec<ExperimentRecord>, CliError> {
    let Replicate { b_star, ds, seed } = replicate(cfg, n, rep)?;
    let record = |kind: EstimatorKind, b_hat: &Mat, lambda: f64, converged: bool, wall_ms: u64| ExperimentRecord {
        estimator: kind.name().to_string(),
        n,
        replicate: rep,
        relative_error: relative_error(b_hat, &b_star),
        lambda_used: lambda,
        converged,
        seed,
        wall_ms,
        success: None,
    };
    let mut out = Vec::with_capacity(cfg.estimators.len());
    for &kind in &cfg.estimators {
        let rec = match kind {
            EstimatorKind::Theory(k) => {
                let lambda = k as f64 * lambda0;
                let (est, ms) = timed(cfg.timing, || Ok(solve_convex(&ds, lambda, solver)?))?;
                record(kind, &est.b_hat, lambda, est.converged, ms)
            }
            EstimatorKind::Oracle => {
                let ((best, lambda, converged), ms) = timed(cfg.timing, || {
                    let grid = halving_grid(lambda_max(&ds), 0.5 * lambda0)?;
                    let mut warm: Option<Mat> = None;
                    let mut best: Option<(f64, Mat, f64, bool)> = None;
                    for &lambda in &grid {
                        let est = solve_convex_from(&ds, lambda, solver, warm.as_ref())?;
                        let err = (&est.b_hat - &b_star).frobenius();
                        if best.as_ref().map_or(true, |b| err < b.0) {
                            best = Some((err, est.b_hat.clone(), lambda, est.converged));
                        }
                        warm = Some(est.b_hat);
                    }
                    let (_, b, lambda, converged) = best.expect("grid is non-empty");
                    Ok((b, lambda, converged))
                })?;
                record(kind, &best, lambda, converged, ms)
            }
            EstimatorKind::Cv => {
                let (res, ms) = timed(cfg.timing, || {
                    let grid = lambda_grid(&ds, 0.01 * lambda_max(&ds))?;
                    let plan = make_folds(n, cfg.k_folds, &mut substream(seed, &[2]))?;
                    Ok(cv_select(&ds, &plan, &grid, &ConvexEstimator { cfg: *solver })?)
                })?;
                record(kind, &res.b_cv, res.lambda_cv, res.converged, ms)
            }
        };
        out.push(rec);
    }
    Ok(out)
}

/// Relative errors of the selected estimators over `n_grid × replicates`.
pub fn run_figure1(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, CliError> {
    if cfg.experiment != Experiment::Figure1 {
        return Err(CliError::Config("run_figure1 needs experiment = figure1".into()));
    }
    let solver = SolverConfig::default();
    let needs_lambda0 = cfg.estimators.iter().any(|e| !matches!(e, EstimatorKind::Cv));
    let lambda0s: Vec<f64> = cfg
        .n_grid
        .iter()
        .map(|&n| if needs_lambda0 { lambda0_base(cfg, n) } else { Ok(0.0) })
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..cfg.n_grid.len()).flat_map(|i| (0..cfg.replicates).map(move |rep| (i, rep))).collect();
    let mut records: Vec<ExperimentRecord> = jobs
        .par_iter()
        .map(|&(i, rep)| figure1_replicate(cfg, cfg.n_grid[i], rep, lambda0s[i], &solver))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    sort_records(&mut records);
    Ok(records)
}

/// Noiseless nuclear-norm recovery over `n_grid × replicates`.
pub fn run_exact_recovery(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>, CliError> {
    if cfg.sigma != 0.0 {
        return Err(CliError::Config(format!("exact_recovery needs sigma = 0, got {}", cfg.sigma)));
    }
    let solver = SolverConfig::default();
    let jobs: Vec<(usize, usize)> =
        cfg.n_grid.iter().flat_map(|&n| (0..cfg.replicates).map(move |rep| (n, rep))).collect();
    let mut records = jobs
        .par_iter()
        .map(|&(n, rep)| {
            let Replicate { b_star, ds, seed } = replicate(cfg, n, rep)?;
            let (est, wall_ms) = timed(cfg.timing, || Ok(solve_noiseless(&ds, &solver)?))?;
            let rel = relative_error(&est.b_hat, &b_star);
            Ok(ExperimentRecord {
                estimator: "noiseless".into(),
                n,
                replicate: rep,
                relative_error: rel,
                lambda_used: est.lambda,
                converged: est.converged,
                seed,
                wall_ms,
                success: Some(rel.sqrt() < RECOVERY_TOL),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    sort_records(&mut records);
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RscProbeLine {
    pub ensemble: String,
    pub d: usize,
    pub r: usize,
    pub n: usize,
    pub replicate: usize,
    pub lambda0: f64,
    pub b_star: f64,
    pub nu: f64,
    pub eta: f64,
    pub trials: usize,
    pub attempts: usize,
    pub min_margin: f64,
    pub violation_count: usize,
    pub beta_emp: f64,
    /// β uses the fixed constants 93 and 𝔠, no placeholders.
    pub constants: &'static str,
}

/// RSC probe per `(n, replicate)` with `ν = λ₀²r/(γ_min²b★²)`, λ₀ calibrated
/// at multiplier 3 and `b★ = 𝔑(B★)`.
pub fn run_rsc_probe(cfg: &ExperimentConfig) -> Result<Vec<RscProbeLine>, CliError> {
    let spec = cfg.spec();
    let consts = ensemble_constants(&spec);
    let eta = eta_for_rank(cfg.r);
    let mut lines = Vec::new();
    for &n in &cfg.n_grid {
        let lambda0 = 3.0 * lambda0_base(cfg, n)?;
        let batch = (0..cfg.replicates)
            .into_par_iter()
            .map(|rep| {
                let Replicate { b_star, ds, seed } = replicate(cfg, n, rep)?;
                let b_bound = spikiness_norm(&spec, &b_star);
                let nu = nu_from_lambda(lambda0, cfg.r, consts.gamma_min, b_bound);
                let report = rsc_probe(&ds, nu, eta, cfg.trials, cfg.sketch_reps, child_seed(seed, &[3]))?;
                Ok(RscProbeLine {
                    ensemble: spec.tag().into(),
                    d: cfg.d,
                    r: cfg.r,
                    n,
                    replicate: rep,
                    lambda0,
                    b_star: b_bound,
                    nu,
                    eta,
                    trials: report.trials,
                    attempts: report.attempts,
                    min_margin: report.min_margin,
                    violation_count: report.violation_count,
                    beta_emp: report.beta_emp,
                    constants: "explicit",
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?;
        lines.extend(batch);
    }
    Ok(lines)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationLine {
    pub ensemble: String,
    pub d: usize,
    pub n: usize,
    pub sigma: f64,
    pub multiplier: f64,
    pub reps: usize,
    pub quantile: f64,
    pub lambda0: f64,
    pub mean_op_norm: f64,
}

/// λ₀ for multipliers 1, 2 and 3 at every `n`.
pub fn run_calibration(cfg: &ExperimentConfig) -> Result<Vec<CalibrationLine>, CliError> {
    let mut lines = Vec::new();
    for &n in &cfg.n_grid {
        let samples = calibration_samples(cfg, n)?;
        let base = stats::kth_largest(&samples, quantile_rank(samples.len(), cfg.quantile));
        for k in 1..=3 {
            lines.push(CalibrationLine {
                ensemble: cfg.spec().tag().into(),
                d: cfg.d,
                n,
                sigma: cfg.sigma,
                multiplier: k as f64,
                reps: samples.len(),
                quantile: cfg.quantile,
                lambda0: k as f64 * base,
                mean_op_norm: stats::mean(&samples),
            });
        }
    }
    Ok(lines)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub estimator: String,
    pub n: usize,
    pub mean: f64,
    /// `2·sd/√count`.
    pub two_se: f64,
    pub count: usize,
}

/// Mean relative error and 2SE per `(estimator, n)`.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    let mut sorted: Vec<&ExperimentRecord> = records.iter().collect();
    sorted.sort_by(|a, b| (&a.estimator, a.n, a.replicate).cmp(&(&b.estimator, b.n, b.replicate)));
    let mut rows = Vec::new();
    for group in sorted.chunk_by(|a, b| a.estimator == b.estimator && a.n == b.n) {
        let vals: Vec<f64> = group.iter().map(|r| r.relative_error).collect();
        rows.push(SummaryRow {
            estimator: group[0].estimator.clone(),
            n: group[0].n,
            mean: stats::mean(&vals),
            two_se: 2.0 * stats::std_error(&vals),
            count: vals.len(),
        });
    }
    rows
}
