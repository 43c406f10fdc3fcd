//! Aggregates metrics CSVs into a per-method summary table.

use crate::checkpoint::write_atomic;
use crate::metrics::{format_float, MetricsError, MetricsTable};
use pbml_core::stats::{polyfit_gain, spearman};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const REPORT_COLUMNS: [&str; 10] = [
    "method",
    "runs",
    "top_fitness",
    "top_fitness_std",
    "average_fitness",
    "average_fitness_std",
    "spearman_mean_r",
    "polyfit_gain",
    "ring_mass",
    "stay_mass",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no metrics.csv files found under the given directories")]
    Empty,
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Metrics { path: PathBuf, source: MetricsError },
}

/// Summary for one method across its runs. Trend statistics are averaged
/// over runs and present only when the world records the needed columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub method: String,
    pub runs: usize,
    pub top_fitness: f64,
    pub top_fitness_std: f64,
    pub average_fitness: f64,
    pub average_fitness_std: f64,
    pub spearman_mean_r: Option<f64>,
    pub polyfit_gain: Option<f64>,
    pub ring_mass: Option<f64>,
    pub stay_mass: Option<f64>,
}

fn find_metrics(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), ReportError> {
    let entries = std::fs::read_dir(dir).map_err(|source| ReportError::Io { path: dir.to_path_buf(), source })?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    for p in paths {
        if p.is_dir() {
            find_metrics(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == crate::experiment::METRICS_FILE) {
            out.push(p);
        }
    }
    Ok(())
}

/// Reads every `metrics.csv` below the given directories, in path order.
pub fn collect(dirs: &[PathBuf]) -> Result<Vec<MetricsTable>, ReportError> {
    let mut paths = Vec::new();
    for d in dirs {
        find_metrics(d, &mut paths)?;
    }
    if paths.is_empty() {
        return Err(ReportError::Empty);
    }
    paths
        .into_iter()
        .map(|p| {
            let bytes = std::fs::read(&p).map_err(|source| ReportError::Io { path: p.clone(), source })?;
            MetricsTable::from_csv(&bytes).map_err(|source| ReportError::Metrics { path: p, source })
        })
        .collect()
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn mean_of(v: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = v.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Final-generation `max_fitness` and `weighted_mean_fitness` plus trend
/// statistics, grouped by method in first-seen order.
pub fn summarize(tables: &[MetricsTable]) -> Vec<ReportRow> {
    let mut methods: Vec<&str> = Vec::new();
    for t in tables {
        if !methods.contains(&t.method.as_str()) {
            methods.push(&t.method);
        }
    }
    methods
        .into_iter()
        .map(|method| {
            let runs: Vec<&MetricsTable> = tables.iter().filter(|t| t.method == method).collect();
            let tops: Vec<f64> = runs.iter().filter_map(|t| t.last("max_fitness")).collect();
            let avgs: Vec<f64> = runs.iter().filter_map(|t| t.last("weighted_mean_fitness")).collect();
            let (top, top_std) = mean_std(&tops);
            let (avg, avg_std) = mean_std(&avgs);
            let trend = |t: &MetricsTable| {
                let g = t.column("generation")?;
                let r = t.column("weighted_mean_R")?;
                spearman(g, r).ok()
            };
            let gain = |t: &MetricsTable| {
                t.column("weighted_mean_R")?;
                polyfit_gain(t.column("generation")?, t.column("weighted_mean_fitness")?).ok()
            };
            let ring = |t: &MetricsTable| Some(t.last("p0")? + t.last("p9")? + t.last("p10")?);
            let stay = |t: &MetricsTable| t.last("p0");
            ReportRow {
                method: method.to_string(),
                runs: runs.len(),
                top_fitness: top,
                top_fitness_std: top_std,
                average_fitness: avg,
                average_fitness_std: avg_std,
                spearman_mean_r: mean_of(&runs.iter().map(|t| trend(t)).collect::<Vec<_>>()),
                polyfit_gain: mean_of(&runs.iter().map(|t| gain(t)).collect::<Vec<_>>()),
                ring_mass: mean_of(&runs.iter().map(|t| ring(t)).collect::<Vec<_>>()),
                stay_mass: mean_of(&runs.iter().map(|t| stay(t)).collect::<Vec<_>>()),
            }
        })
        .collect()
}

pub fn to_csv(rows: &[ReportRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(REPORT_COLUMNS).expect("in-memory write");
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.runs.to_string(),
            format_float(r.top_fitness),
            format_float(r.top_fitness_std),
            format_float(r.average_fitness),
            format_float(r.average_fitness_std),
            opt(r.spearman_mean_r),
            opt(r.polyfit_gain),
            opt(r.ring_mass),
            opt(r.stay_mass),
        ])
        .expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Summarizes the runs under `dirs` into `out`.
pub fn report(dirs: &[PathBuf], out: &Path) -> Result<Vec<ReportRow>, ReportError> {
    let rows = summarize(&collect(dirs)?);
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| ReportError::Io { path: parent.to_path_buf(), source })?;
    }
    write_atomic(out, &to_csv(&rows)).map_err(|source| ReportError::Io { path: out.to_path_buf(), source })?;
    Ok(rows)
}
