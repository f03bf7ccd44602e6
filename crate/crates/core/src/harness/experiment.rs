//! Sweep orchestration and aggregation.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ApSpacing, ExperimentConfig, SweepPoint};
use super::trial::{run_trial, Scheme, TrialRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub scheme: String,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub sweep_index: usize,
    pub spacing: ApSpacing,
    pub trial: usize,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub config: ExperimentConfig,
    pub rows: Vec<AggregateRow>,
    pub records: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub elapsed_s: f64,
    pub workers: usize,
}

/// Mean and standard error of a sample.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Averages dB values in linear scale and reports the result in dB; the
/// standard error is mapped to dB to first order.
pub fn mean_stderr_db(db: &[f64]) -> (f64, f64) {
    let lin: Vec<f64> = db.iter().map(|d| 10f64.powf(d / 10.0)).collect();
    let (m, s) = mean_stderr(&lin);
    (10.0 * m.log10(), 10.0 / std::f64::consts::LN_10 * s / m)
}

const NMSE_METRICS: [&str; 3] = ["nmse_h_db", "nmse_g_db", "nmse_z_db"];

fn nmse_value(r: &TrialRecord, metric: &str) -> f64 {
    match metric {
        "nmse_h_db" => r.nmse_h_db,
        "nmse_g_db" => r.nmse_g_db,
        _ => r.nmse_z_db,
    }
}

/// Aggregates trial records in sweep, spacing, scheme, metric order.
pub fn aggregate(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    let row = |p: &SweepPoint, scheme: String, metric: &str, (mean, stderr): (f64, f64), n: usize| AggregateRow {
        experiment: cfg.kind.id().to_string(),
        sweep_name: cfg.kind.sweep_name().to_string(),
        sweep_value: p.value,
        scheme,
        metric: metric.to_string(),
        mean,
        stderr,
        trials: n,
        seed: cfg.base_seed,
    };
    for p in cfg.sweep_points() {
        for &sp in &cfg.spacings {
            let recs: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.sweep_index == p.index && r.spacing == sp)
                .collect();
            let label = |s: Scheme| format!("{}@{}", s.label(), sp.label());
            for metric in NMSE_METRICS {
                let vals: Vec<f64> = recs
                    .iter()
                    .map(|r| nmse_value(r, metric))
                    .filter(|v| !v.is_nan())
                    .collect();
                rows.push(row(&p, label(Scheme::Proposed), metric, mean_stderr_db(&vals), vals.len()));
            }
            if cfg.kind.computes_rates() {
                for s in Scheme::ALL {
                    let vals: Vec<f64> = recs
                        .iter()
                        .filter_map(|r| r.rates.map(|x| x.get(s)))
                        .filter(|v| v.is_finite())
                        .collect();
                    rows.push(row(&p, label(s), "rate_bps_hz", mean_stderr(&vals), vals.len()));
                }
            }
        }
    }
    rows
}

/// Runs every trial of every sweep point on `workers` threads.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentRun> {
    cfg.validate()?;
    let start = Instant::now();
    let mut items = Vec::new();
    for p in cfg.sweep_points() {
        for (v, &sp) in cfg.spacings.iter().enumerate() {
            for t in 0..cfg.trials {
                items.push((p, sp, v, t));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<(usize, ApSpacing, usize, Result<TrialRecord>)> = pool.install(|| {
        items
            .par_iter()
            .map(|&(p, sp, v, t)| (p.index, sp, t, run_trial(cfg, &p, sp, v, t)))
            .collect()
    });
    let mut records = Vec::with_capacity(outcomes.len());
    let mut failures = Vec::new();
    for (sweep_index, spacing, trial, out) in outcomes {
        match out {
            Ok(r) => records.push(r),
            Err(e) => {
                log::warn!("trial {trial} of point {sweep_index} failed: {e}");
                failures.push(TrialFailure {
                    sweep_index,
                    spacing,
                    trial,
                    error: e.to_string(),
                });
            }
        }
    }
    let rows = aggregate(cfg, &records);
    Ok(ExperimentRun {
        config: cfg.clone(),
        rows,
        records,
        failures,
        elapsed_s: start.elapsed().as_secs_f64(),
        workers: workers.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_and_stderr() {
        let (m, s) = mean_stderr(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn db_average_is_linear() {
        let (m, _) = mean_stderr_db(&[0.0, 10.0]);
        assert!((m - 10.0 * 5.5f64.log10()).abs() < 1e-12);
        let (m, s) = mean_stderr_db(&[-20.0]);
        assert!((m + 20.0).abs() < 1e-12);
        assert_eq!(s, 0.0);
    }
}
