//! Experiment configuration: flat `key = value` files, command-line
//! overrides, and per-experiment defaults.
//!
//! Precedence is command line, then file, then defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use tracereg::sampling::{EnsembleKind, EnsembleSpec};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    Figure1,
    ExactRecovery,
    RscProbe,
    Calibration,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Figure1 => "figure1",
            Experiment::ExactRecovery => "exact_recovery",
            Experiment::RscProbe => "rsc_probe",
            Experiment::Calibration => "calibration",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "figure1" => Ok(Experiment::Figure1),
            "exact_recovery" | "exact-recovery" => Ok(Experiment::ExactRecovery),
            "rsc_probe" | "rsc-probe" => Ok(Experiment::RscProbe),
            "calibration" => Ok(Experiment::Calibration),
            other => Err(CliError::Config(format!("unknown experiment '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    /// Convex solve at `k·λ₀`.
    Theory(u8),
    Oracle,
    Cv,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] =
        [EstimatorKind::Theory(1), EstimatorKind::Theory(2), EstimatorKind::Theory(3), EstimatorKind::Oracle, EstimatorKind::Cv];

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::Theory(1) => "theory1",
            EstimatorKind::Theory(2) => "theory2",
            EstimatorKind::Theory(_) => "theory3",
            EstimatorKind::Oracle => "oracle",
            EstimatorKind::Cv => "cv",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CliError> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| CliError::Config(format!("unknown estimator '{s}'")))
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub ensemble: EnsembleKind,
    pub d: usize,
    pub r: usize,
    pub sigma: f64,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub k_folds: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorKind>,
    pub out_dir: PathBuf,
    /// Replicates behind each λ₀ calibration.
    pub calib_reps: usize,
    pub quantile: f64,
    /// Record wall-clock times; off by default so outputs are reproducible.
    pub timing: bool,
    /// Sampled matrices per RSC probe.
    pub trials: usize,
    /// Draws per Rademacher sketch.
    pub sketch_reps: usize,
}

pub const KEYS: [&str; 16] = [
    "experiment",
    "ensemble",
    "d",
    "r",
    "sigma",
    "n_grid",
    "replicates",
    "k_folds",
    "seed",
    "estimators",
    "out_dir",
    "calib_reps",
    "quantile",
    "timing",
    "trials",
    "sketch_reps",
];

/// Unresolved `key → value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
    /// Switches replicate count to 100 when not set explicitly.
    pub paper_scale: bool,
}

impl RawConfig {
    /// Parse `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut out = RawConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", lineno + 1)))?;
            let k = k.trim();
            if k == "paper_scale" {
                out.paper_scale = parse_bool(k, v.trim())?;
                continue;
            }
            out.set(k, v.trim())?;
        }
        Ok(out)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<(), CliError> {
        if !KEYS.contains(&key) {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Layer `other` on top of `self`.
    pub fn merge(mut self, other: RawConfig) -> Self {
        self.entries.extend(other.entries);
        self.paper_scale |= other.paper_scale;
        self
    }

    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let get = |k: &str| self.entries.get(k).map(String::as_str);
        let experiment = Experiment::parse(get("experiment").unwrap_or("figure1"))?;
        let (ens, d, sigma): (&str, usize, f64) = match experiment {
            Experiment::Figure1 | Experiment::Calibration => ("mc-plain", 50, 1.0),
            Experiment::ExactRecovery => ("gaussian", 30, 0.0),
            Experiment::RscProbe => ("mc-gaussian", 30, 1.0),
        };
        let ensemble = EnsembleSpec::kind_from_tag(get("ensemble").unwrap_or(ens)).map_err(|e| CliError::Config(e.to_string()))?;
        let d = opt_parse(get("d"), "d")?.unwrap_or(d);
        let r = opt_parse(get("r"), "r")?.unwrap_or(2);
        let n_grid = match get("n_grid") {
            Some(v) => parse_list(v, "n_grid")?,
            None => match experiment {
                Experiment::Figure1 | Experiment::Calibration => vec![1250, 2500, 5000, 10000],
                Experiment::ExactRecovery => vec![r * (2 * d).saturating_sub(r) / 2, 10 * r * d],
                Experiment::RscProbe => vec![(20.0 * d as f64 * (d as f64).ln()).ceil() as usize],
            },
        };
        let default_reps = if self.paper_scale { 100 } else { 20 };
        let estimators = match get("estimators") {
            Some(v) => v
                .split(',')
                .map(|s| EstimatorKind::parse(s.trim()))
                .collect::<Result<Vec<_>, _>>()?,
            None => EstimatorKind::ALL.to_vec(),
        };
        let cfg = ExperimentConfig {
            experiment,
            ensemble,
            d,
            r,
            sigma: opt_parse(get("sigma"), "sigma")?.unwrap_or(sigma),
            n_grid,
            replicates: opt_parse(get("replicates"), "replicates")?.unwrap_or(default_reps),
            k_folds: opt_parse(get("k_folds"), "k_folds")?.unwrap_or(5),
            seed: opt_parse(get("seed"), "seed")?.unwrap_or(0),
            estimators,
            out_dir: PathBuf::from(get("out_dir").unwrap_or("tracereg-out")),
            calib_reps: opt_parse(get("calib_reps"), "calib_reps")?.unwrap_or(1000),
            quantile: opt_parse(get("quantile"), "quantile")?.unwrap_or(0.9),
            timing: get("timing").map(|v| parse_bool("timing", v)).transpose()?.unwrap_or(false),
            trials: opt_parse(get("trials"), "trials")?.unwrap_or(1000),
            sketch_reps: opt_parse(get("sketch_reps"), "sketch_reps")?.unwrap_or(50),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn opt_parse<T: std::str::FromStr>(v: Option<&str>, key: &str) -> Result<Option<T>, CliError>
where
    T::Err: fmt::Display,
{
    v.map(|s| s.trim().parse::<T>().map_err(|e| CliError::Config(format!("{key}: '{s}': {e}")))).transpose()
}

fn parse_list(v: &str, key: &str) -> Result<Vec<usize>, CliError> {
    v.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|e| CliError::Config(format!("{key}: '{s}': {e}"))))
        .collect()
}

impl ExperimentConfig {
    pub fn spec(&self) -> EnsembleSpec {
        EnsembleSpec { kind: self.ensemble, d_r: self.d, d_c: self.d }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        if self.d == 0 {
            return fail("d must be positive".into());
        }
        if self.r == 0 || self.r > self.d {
            return fail(format!("r must lie in 1..={}, got {}", self.d, self.r));
        }
        if self.replicates == 0 {
            return fail("replicates must be at least 1".into());
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return fail(format!("n_grid must be positive and strictly increasing, got {:?}", self.n_grid));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be finite and non-negative, got {}", self.sigma));
        }
        if !(self.quantile > 0.0 && self.quantile < 1.0) {
            return fail(format!("quantile must lie in (0, 1), got {}", self.quantile));
        }
        if self.calib_reps < 10 {
            return fail("calib_reps must be at least 10".into());
        }
        if self.trials == 0 || self.sketch_reps == 0 {
            return fail("trials and sketch_reps must be positive".into());
        }
        match self.experiment {
            Experiment::ExactRecovery if self.sigma != 0.0 => {
                fail(format!("exact_recovery needs sigma = 0, got {}", self.sigma))
            }
            Experiment::Figure1 | Experiment::RscProbe if self.sigma == 0.0 => {
                fail(format!("{} needs sigma > 0", self.experiment.name()))
            }
            Experiment::Figure1 if self.estimators.is_empty() => fail("no estimators selected".into()),
            Experiment::Figure1 if self.estimators.contains(&EstimatorKind::Cv) && (self.k_folds < 2 || self.k_folds > self.n_grid[0]) => {
                fail(format!("k_folds must lie in 2..=n, got {}", self.k_folds))
            }
            _ => Ok(()),
        }
    }

    /// Resolved settings as a `key = value` file that parses back to `self`.
    pub fn echo(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let ests = self.estimators.iter().map(|e| e.name()).collect::<Vec<_>>().join(",");
        let spec = self.spec();
        let pairs: [(&str, String); 16] = [
            ("experiment", self.experiment.name().into()),
            ("ensemble", spec.tag().into()),
            ("d", self.d.to_string()),
            ("r", self.r.to_string()),
            ("sigma", self.sigma.to_string()),
            ("n_grid", list(&self.n_grid)),
            ("replicates", self.replicates.to_string()),
            ("k_folds", self.k_folds.to_string()),
            ("seed", self.seed.to_string()),
            ("estimators", ests),
            ("out_dir", self.out_dir.display().to_string()),
            ("calib_reps", self.calib_reps.to_string()),
            ("quantile", self.quantile.to_string()),
            ("timing", self.timing.to_string()),
            ("trials", self.trials.to_string()),
            ("sketch_reps", self.sketch_reps.to_string()),
        ];
        pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
