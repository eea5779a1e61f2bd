//! Plot-ready TSV output and the run manifest.
//!
//! Every TSV is tab separated with a header row; floats are printed with 17
//! significant digits so outputs round-trip and compare byte for byte.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::ExperimentConfig;
use super::sweep::ResultRow;
use crate::error::{Error, Result};
use crate::risk::RunningStats;

pub const METRICS: [&str; 5] = ["excess", "bias", "variance", "prediction_error", "approx_error"];

/// 17 significant digits in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_tsv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out += &r.join("\t");
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

fn metric(row: &ResultRow, name: &str) -> Option<f64> {
    match name {
        "excess" => row.excess,
        "bias" => row.bias,
        "variance" => row.variance,
        "prediction_error" => row.prediction_error,
        "approx_error" => row.approx_error,
        _ => None,
    }
}

/// Series in order of first appearance, each with its grid points ascending.
fn groups(rows: &[ResultRow]) -> Vec<(String, Vec<(usize, Vec<&ResultRow>)>)> {
    let mut order: Vec<String> = Vec::new();
    let mut by_series: HashMap<String, BTreeMap<usize, Vec<&ResultRow>>> = HashMap::new();
    for r in rows.iter().filter(|r| r.failed.is_none()) {
        let s = r.series();
        if !by_series.contains_key(&s) {
            order.push(s.clone());
        }
        by_series.entry(s).or_default().entry(r.k).or_default().push(r);
    }
    order
        .into_iter()
        .map(|s| {
            let grid = by_series.remove(&s).expect("series recorded").into_iter().collect();
            (s, grid)
        })
        .collect()
}

fn summarize(values: impl Iterator<Item = f64>) -> Option<(RunningStats, f64, f64)> {
    let mut stats = RunningStats::default();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values {
        stats.push(v);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (stats.count() > 0).then_some((stats, lo, hi))
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub replications: usize,
    pub rows: usize,
    pub failed_rows: usize,
    pub degenerate_rows: usize,
    pub files: Vec<String>,
    pub config: &'a ExperimentConfig,
}

/// Writes one TSV per metric (`method, grid, stat, value` with stats
/// `mean`, `min`, `max`, `count`), `bounds_summary.tsv`, `rows.tsv` and
/// `manifest.json`. Returns the paths written.
pub fn emit_tables(rows: &[ResultRow], cfg: &ExperimentConfig, outdir: &Path) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::arg("no rows to emit"));
    }
    fs::create_dir_all(outdir)?;
    let grouped = groups(rows);
    let mut written = Vec::new();

    for name in METRICS {
        let mut lines = Vec::new();
        for (series, grid) in &grouped {
            for (k, members) in grid {
                if let Some((stats, lo, hi)) = summarize(members.iter().filter_map(|r| metric(r, name))) {
                    for (stat, v) in [("mean", fmt_f64(stats.mean())), ("min", fmt_f64(lo)), ("max", fmt_f64(hi)), ("count", stats.count().to_string())] {
                        lines.push(vec![series.clone(), k.to_string(), stat.to_string(), v]);
                    }
                }
            }
        }
        if lines.is_empty() {
            continue;
        }
        let path = outdir.join(format!("{name}.tsv"));
        write_tsv(&path, &["method", "grid", "stat", "value"], &lines)?;
        written.push(path);
    }

    let mut gaps = Vec::new();
    for (series, grid) in &grouped {
        for (k, members) in grid {
            let names: std::collections::BTreeSet<&String> = members.iter().flat_map(|r| r.bounds.keys()).collect();
            let empirical = summarize(members.iter().filter_map(|r| r.excess));
            for b in names {
                if let Some((bs, _, _)) = summarize(members.iter().filter_map(|r| r.bounds.get(b).copied())) {
                    let (emp, gap) = match &empirical {
                        Some((e, _, _)) => (fmt_f64(e.mean()), fmt_f64(bs.mean() - e.mean())),
                        None => ("NA".into(), "NA".into()),
                    };
                    gaps.push(vec![series.clone(), k.to_string(), b.clone(), fmt_f64(bs.mean()), emp, gap]);
                }
            }
        }
    }
    let path = outdir.join("bounds_summary.tsv");
    write_tsv(&path, &["method", "grid", "bound", "bound_mean", "empirical_mean", "gap"], &gaps)?;
    written.push(path);

    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_f64);
    let raw: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.replicate.to_string(),
                r.series(),
                r.r.to_string(),
                r.k.to_string(),
                opt(r.bias),
                opt(r.variance),
                opt(r.excess),
                opt(r.prediction_error),
                opt(r.approx_error),
                r.degenerate.to_string(),
                r.failed.clone().unwrap_or_default().replace(['\t', '\n'], " "),
            ]
        })
        .collect();
    let path = outdir.join("rows.tsv");
    write_tsv(
        &path,
        &["replicate", "method", "r", "k", "bias", "variance", "excess", "prediction_error", "approx_error", "degenerate", "failed"],
        &raw,
    )?;
    written.push(path);

    let manifest_path = outdir.join("manifest.json");
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        replications: cfg.replications,
        rows: rows.len(),
        failed_rows: rows.iter().filter(|r| r.failed.is_some()).count(),
        degenerate_rows: rows.iter().filter(|r| r.degenerate).count(),
        files: written
            .iter()
            .chain(std::iter::once(&manifest_path))
            .map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default())
            .collect(),
        config: cfg,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(&manifest_path, json + "\n")?;
    written.push(manifest_path);
    Ok(written)
}
