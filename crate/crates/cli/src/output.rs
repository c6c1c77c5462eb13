//! CSV layouts and the JSON run manifest.
//!
//! Column sets are pinned by [`CSV_SCHEMA_VERSION`]; bump it whenever a header changes.

use std::io::Write;

use apsr_core::workload::SizingRun;
use apsr_core::{ExperimentConfig, RunMetrics, SlotMetrics};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const CSV_SCHEMA_VERSION: u32 = 1;

pub const ANALYZE_HEADER: [&str; 8] = [
    "n",
    "delta_hat",
    "budget",
    "k",
    "s",
    "d",
    "expected_happy",
    "happy_fraction",
];

pub const RUNS_HEADER: [&str; 18] = [
    "seed",
    "slots",
    "requests",
    "attempts",
    "successes",
    "declines_no_host",
    "declines_collision",
    "decline_ratio",
    "throughput",
    "scheduler_queries",
    "controller_queries",
    "max_slot_queries",
    "mean_active_schedulers",
    "mean_configured_schedulers",
    "peak_utilization",
    "final_utilization",
    "truncated",
    "series_file",
];

pub const SERIES_HEADER: [&str; 17] = [
    "slot",
    "arrivals",
    "departures",
    "attempts",
    "successes",
    "declines_no_host",
    "declines_collision",
    "queries",
    "controller_queries",
    "active_schedulers",
    "s",
    "d",
    "k_estimate",
    "utilization",
    "pending",
    "placed",
    "decline_ratio_so_far",
];

pub const SIZING_HEADER: [&str; 4] = ["run", "policy", "trace_seed", "hosts"];

/// One row of the analytic table.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyzeRow {
    pub n: u64,
    pub delta_hat: f64,
    pub budget: u64,
    pub k: u64,
    pub s: u64,
    pub d: u64,
    pub expected_happy: f64,
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_analyze<W: Write>(out: W, rows: &[AnalyzeRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ANALYZE_HEADER)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            r.delta_hat.to_string(),
            r.budget.to_string(),
            r.k.to_string(),
            r.s.to_string(),
            r.d.to_string(),
            r.expected_happy.to_string(),
            (r.expected_happy / r.s as f64).to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn runs_record(seed: u64, m: &RunMetrics, series_file: Option<&str>) -> Vec<String> {
    vec![
        seed.to_string(),
        m.slots.to_string(),
        m.requests.to_string(),
        m.attempts.to_string(),
        m.successes.to_string(),
        m.declines_no_host.to_string(),
        m.declines_collision.to_string(),
        opt(m.decline_ratio),
        m.throughput.to_string(),
        m.scheduler_queries.to_string(),
        m.controller_queries.to_string(),
        m.max_slot_queries.to_string(),
        m.mean_active_schedulers.to_string(),
        m.mean_configured_schedulers.to_string(),
        m.peak_utilization.to_string(),
        m.final_utilization.to_string(),
        m.truncated.to_string(),
        series_file.unwrap_or_default().to_string(),
    ]
}

pub fn write_series<W: Write>(out: W, series: &[SlotMetrics]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_HEADER)?;
    let (mut attempts, mut declines) = (0u64, 0u64);
    for m in series {
        attempts += m.attempts;
        declines += m.attempts - m.successes;
        let so_far = (attempts > 0).then(|| declines as f64 / attempts as f64);
        w.write_record([
            m.slot.to_string(),
            m.arrivals.to_string(),
            m.departures.to_string(),
            m.attempts.to_string(),
            m.successes.to_string(),
            m.declines_no_host.to_string(),
            m.declines_collision.to_string(),
            m.queries.to_string(),
            m.controller_queries.to_string(),
            m.active_schedulers.to_string(),
            m.configured_schedulers.to_string(),
            m.queries_per_scheduler.to_string(),
            opt(m.k_estimate),
            m.utilization.to_string(),
            m.pending.to_string(),
            m.placed.to_string(),
            opt(so_far),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_sizing<W: Write>(out: W, runs: &[SizingRun]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SIZING_HEADER)?;
    for r in runs {
        w.write_record([
            r.run.to_string(),
            r.policy.clone(),
            r.trace_seed.to_string(),
            r.hosts.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub metrics: RunMetrics,
    pub series_file: Option<String>,
}

/// Mean and standard error across seeds; `stderr` needs at least two values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                count,
                mean: None,
                stderr: None,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let stderr = (count > 1).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        });
        Self {
            count,
            mean: Some(mean),
            stderr,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Over runs that attempted at least one placement.
    pub decline_ratio: Summary,
    pub throughput: Summary,
    pub scheduler_queries: Summary,
    pub mean_active_schedulers: Summary,
    pub slots: Summary,
}

impl Aggregate {
    pub fn of(runs: &[RunRecord]) -> Self {
        let collect = |f: &dyn Fn(&RunMetrics) -> Option<f64>| -> Vec<f64> {
            runs.iter().filter_map(|r| f(&r.metrics)).collect()
        };
        Self {
            decline_ratio: Summary::of(&collect(&|m| m.decline_ratio)),
            throughput: Summary::of(&collect(&|m| Some(m.throughput))),
            scheduler_queries: Summary::of(&collect(&|m| Some(m.scheduler_queries as f64))),
            mean_active_schedulers: Summary::of(&collect(&|m| Some(m.mean_active_schedulers))),
            slots: Summary::of(&collect(&|m| Some(m.slots as f64))),
        }
    }
}

/// Everything needed to trace a result back to `(config, seed)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub csv_schema: u32,
    /// The resolved configuration; each run replaces `seed` with its own.
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub aggregate: Aggregate,
}

impl RunManifest {
    pub fn new(config: ExperimentConfig, seeds: Vec<u64>, runs: Vec<RunRecord>) -> Self {
        let aggregate = Aggregate::of(&runs);
        Self {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            csv_schema: CSV_SCHEMA_VERSION,
            config,
            seeds,
            runs,
            aggregate,
        }
    }

    /// The exact configuration of the run with `seed`.
    pub fn config_for(&self, seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            seed,
            ..self.config.clone()
        }
    }
}
