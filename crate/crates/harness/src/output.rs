//! CSV tables and the JSON metadata sidecar.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::StudyConfig;
use crate::study::{SeriesFit, StudyOutput};

pub const RESULTS_HEADER: [&str; 10] = [
    "integrator",
    "rank",
    "h",
    "error",
    "slope",
    "norm_drift",
    "energy_drift",
    "wall_ms",
    "rhs_evals",
    "config_hash",
];

pub const DRIFT_HEADER: [&str; 6] = ["integrator", "rank", "h", "t", "norm_drift", "energy_drift"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WrittenFiles {
    pub results: PathBuf,
    pub drift: Option<PathBuf>,
    pub meta: PathBuf,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn write_results(path: &Path, out: &StudyOutput) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in &out.records {
        w.write_record([
            r.integrator.name().to_string(),
            r.rank.to_string(),
            r.h.to_string(),
            opt(r.error),
            opt(r.slope),
            opt(r.norm_drift),
            opt(r.energy_drift),
            opt(r.wall_ms),
            opt(r.rhs_evals),
            out.plan.config_hash.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

fn write_drift(path: &Path, out: &StudyOutput) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(DRIFT_HEADER).map_err(csv_err)?;
    for d in &out.drift {
        w.write_record([
            d.integrator.name().to_string(),
            d.rank.to_string(),
            d.h.to_string(),
            d.t.to_string(),
            opt(d.norm_drift),
            opt(d.energy_drift),
        ])
        .map_err(csv_err)?;
    }
    w.flush()
}

#[derive(Serialize)]
struct Failure<'a> {
    integrator: &'static str,
    rank: usize,
    h: f64,
    reason: &'a str,
}

#[derive(Serialize)]
struct Meta<'a> {
    config: &'a StudyConfig,
    config_hash: &'a str,
    problem: &'a std::collections::BTreeMap<String, serde_json::Value>,
    reference_norm: Option<f64>,
    fits: &'a [SeriesFit],
    failures: Vec<Failure<'a>>,
}

/// `<stem>_drift.csv` next to `results`.
pub fn drift_path(results: &Path) -> PathBuf {
    let stem = results
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    results.with_file_name(format!("{stem}_drift.csv"))
}

/// `<results>.meta.json`.
pub fn meta_path(results: &Path) -> PathBuf {
    let mut name = results.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    results.with_file_name(name)
}

/// Writes the result table, the drift table when there are drift samples,
/// and the metadata sidecar into `dir`.
pub fn write_study(dir: &Path, out: &StudyOutput) -> io::Result<WrittenFiles> {
    fs::create_dir_all(dir)?;
    let results = dir.join(&out.plan.config.output);
    write_results(&results, out)?;
    let drift = if out.drift.is_empty() {
        None
    } else {
        let p = drift_path(&results);
        write_drift(&p, out)?;
        Some(p)
    };
    let meta = Meta {
        config: &out.plan.config,
        config_hash: &out.plan.config_hash,
        problem: &out.problem_info,
        reference_norm: out.reference_norm,
        fits: &out.fits,
        failures: out
            .failures()
            .map(|r| Failure {
                integrator: r.integrator.name(),
                rank: r.rank,
                h: r.h,
                reason: r.failure.as_deref().unwrap_or_default(),
            })
            .collect(),
    };
    let meta_file = meta_path(&results);
    let json = serde_json::to_string_pretty(&meta).map_err(io::Error::other)?;
    fs::write(&meta_file, json + "\n")?;
    Ok(WrittenFiles {
        results,
        drift,
        meta: meta_file,
    })
}
