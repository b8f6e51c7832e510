//! CSV, config echo, JSON lines and chart files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Experiment, ExperimentConfig};
use crate::experiments::{ExperimentRecord, SummaryRow};
use crate::svg::{line_chart, Series};
use crate::CliError;

pub const RECORD_HEADER: [&str; 8] =
    ["estimator", "n", "replicate", "relative_error", "lambda_used", "converged", "seed", "wall_ms"];
pub const SUMMARY_HEADER: [&str; 5] = ["estimator", "n", "mean", "two_se", "count"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io { path: path.to_path_buf(), source: std::io::Error::other(e) }
}

pub fn records_csv(records: &[ExperimentRecord]) -> Result<Vec<u8>, csv::Error> {
    let with_success = records.iter().any(|r| r.success.is_some());
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let mut header: Vec<&str> = RECORD_HEADER.to_vec();
    if with_success {
        header.push("success");
    }
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.estimator.clone(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.relative_error.to_string(),
            r.lambda_used.to_string(),
            r.converged.to_string(),
            r.seed.to_string(),
            r.wall_ms.to_string(),
        ];
        if with_success {
            row.push(r.success.unwrap_or(false).to_string());
        }
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

pub fn summary_csv(rows: &[SummaryRow]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.estimator.clone(),
            r.n.to_string(),
            r.mean.to_string(),
            r.two_se.to_string(),
            r.count.to_string(),
        ])?;
    }
    w.into_inner().map_err(|e| csv::Error::from(e.into_error()))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T, CliError> {
    rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| CliError::Io {
        path: path.to_path_buf(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("bad field {i} in {rec:?}")),
    })
}

/// Parse a `records.csv` file back into records.
pub fn read_records(path: &Path) -> Result<Vec<ExperimentRecord>, CliError> {
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let with_success = rdr.headers().map_err(csv_err(path))?.len() > RECORD_HEADER.len();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(path))?;
        out.push(ExperimentRecord {
            estimator: field(&rec, 0, path)?,
            n: field(&rec, 1, path)?,
            replicate: field(&rec, 2, path)?,
            relative_error: field(&rec, 3, path)?,
            lambda_used: field(&rec, 4, path)?,
            converged: field(&rec, 5, path)?,
            seed: field(&rec, 6, path)?,
            wall_ms: field(&rec, 7, path)?,
            success: if with_success { Some(field(&rec, 8, path)?) } else { None },
        });
    }
    Ok(out)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Chart of mean relative error against `n`, one series per estimator.
pub fn summary_chart(rows: &[SummaryRow], title: &str) -> String {
    let mut series: Vec<Series> = Vec::new();
    for row in rows {
        if series.last().map_or(true, |s| s.name != row.estimator) {
            series.push(Series { name: row.estimator.clone(), points: Vec::new() });
        }
        let s = series.last_mut().expect("just pushed");
        s.points.push((row.n as f64, row.mean, row.two_se));
    }
    line_chart(title, "n", "mean relative error", &series)
}

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone)]
pub struct Emitted {
    pub records: PathBuf,
    pub summary: PathBuf,
    pub config: PathBuf,
    pub chart: PathBuf,
}

/// Write records, summary, resolved config and chart into `cfg.out_dir`.
pub fn emit_outputs(records: &[ExperimentRecord], summary: &[SummaryRow], cfg: &ExperimentConfig) -> Result<Emitted, CliError> {
    ensure_dir(&cfg.out_dir)?;
    let out = Emitted {
        records: cfg.out_dir.join("records.csv"),
        summary: cfg.out_dir.join("summary.csv"),
        config: cfg.out_dir.join("config.echo"),
        chart: cfg.out_dir.join(format!("{}.svg", cfg.experiment.name())),
    };
    write_file(&out.records, &records_csv(records).map_err(csv_err(&out.records))?)?;
    write_file(&out.summary, &summary_csv(summary).map_err(csv_err(&out.summary))?)?;
    write_file(&out.config, cfg.echo().as_bytes())?;
    let title = match cfg.experiment {
        Experiment::ExactRecovery => format!("noiseless recovery, {} d={} r={}", cfg.spec().tag(), cfg.d, cfg.r),
        _ => format!("relative error, d={} r={} sigma={}", cfg.d, cfg.r, cfg.sigma),
    };
    write_file(&out.chart, summary_chart(summary, &title).as_bytes())?;
    Ok(out)
}

/// Write serializable lines as JSON lines to `out_dir/<name>.jsonl` and to
/// `sink`.
pub fn emit_json_lines<T: Serialize>(lines: &[T], cfg: &ExperimentConfig, mut sink: impl Write) -> Result<PathBuf, CliError> {
    ensure_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(format!("{}.jsonl", cfg.experiment.name()));
    let mut body = String::new();
    for line in lines {
        let json = serde_json::to_string(line).map_err(|e| CliError::Io {
            path: path.clone(),
            source: std::io::Error::other(e),
        })?;
        body.push_str(&json);
        body.push('\n');
    }
    write_file(&path, body.as_bytes())?;
    write_file(&cfg.out_dir.join("config.echo"), cfg.echo().as_bytes())?;
    sink.write_all(body.as_bytes()).map_err(io_err(Path::new("<stdout>")))?;
    Ok(path)
}
