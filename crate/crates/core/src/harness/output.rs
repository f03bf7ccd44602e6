//! CSV and metadata persistence.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::experiment::{AggregateRow, ExperimentRun};
use crate::error::Result;

pub const CSV_HEADER: [&str; 9] = [
    "experiment",
    "sweep_name",
    "sweep_value",
    "scheme",
    "metric",
    "mean",
    "stderr",
    "trials",
    "seed",
];

/// Serializes aggregated rows with the fixed header.
pub fn csv_string(rows: &[AggregateRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.experiment.clone(),
            r.sweep_name.clone(),
            r.sweep_value.to_string(),
            r.scheme.clone(),
            r.metric.clone(),
            r.mean.to_string(),
            r.stderr.to_string(),
            r.trials.to_string(),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Metadata document: resolved config, code version, timings, failures.
pub fn metadata_json(run: &ExperimentRun) -> serde_json::Value {
    let cfg = &run.config;
    let points: Vec<serde_json::Value> = cfg
        .sweep_points()
        .iter()
        .map(|p| {
            let times: Vec<f64> = run
                .records
                .iter()
                .filter(|r| r.sweep_index == p.index)
                .map(|r| r.runtime_ms)
                .collect();
            let restarts: usize = run
                .records
                .iter()
                .filter(|r| r.sweep_index == p.index)
                .map(|r| r.restarts_used)
                .sum();
            let exact = run
                .records
                .iter()
                .filter(|r| r.sweep_index == p.index && r.permutation_exact)
                .count();
            json!({
                "sweep_value": p.value,
                "trials_completed": times.len(),
                "mean_runtime_ms": if times.is_empty() { 0.0 } else { times.iter().sum::<f64>() / times.len() as f64 },
                "badvamp_runs": restarts,
                "permutation_exact": exact,
                "diverged": run.records.iter().filter(|r| r.sweep_index == p.index && r.diverged).count(),
            })
        })
        .collect();
    json!({
        "experiment": cfg.kind.id(),
        "code_version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "workers": run.workers,
        "elapsed_s": run.elapsed_s,
        "points": points,
        "failures": run.failures,
        "perfect_csi_phases": format!(
            "closed form on true channels; coordinate grid refinement ({} points, {} passes) when L <= {}",
            cfg.grid_points, cfg.grid_passes, crate::phase::GRID_SEARCH_MAX_ELEMENTS
        ),
        "nmse_averaging": "linear scale, reported in dB",
    })
}

/// Writes `<dir>/<experiment>.csv` and `<dir>/<experiment>.json`.
pub fn write_outputs(run: &ExperimentRun, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let id = run.config.kind.id();
    let csv_path = dir.join(format!("{id}.csv"));
    let json_path = dir.join(format!("{id}.json"));
    File::create(&csv_path)?.write_all(csv_string(&run.rows)?.as_bytes())?;
    let mut f = File::create(&json_path)?;
    serde_json::to_writer_pretty(&mut f, &metadata_json(run))?;
    f.write_all(b"\n")?;
    Ok((csv_path, json_path))
}
