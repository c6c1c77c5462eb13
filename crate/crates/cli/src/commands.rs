use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc;

use apsr_core::workload::{preset_hosts, size_hosts, HostPreset, SizingReport, BUILTIN_DATASETS};
use apsr_core::{
    expected_happy, max_paral, run_experiment, BallsBinsParams, DatasetSpec, ExperimentConfig, PolicyConfig, RunResult,
    SimError,
};
use rayon::prelude::*;

use crate::error::CliError;
use crate::output::{self, AnalyzeRow, RunManifest, RunRecord, RUNS_HEADER};

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(write_err(path))
}

/// Parses a `k` grid: comma-separated values `k`, ranges `a:b` or stepped ranges `a:b:step`
/// (both ends inclusive). `None` gives eleven evenly spaced points from 0 to `n`.
pub fn parse_k_grid(spec: Option<&str>, n: u64) -> Result<Vec<u64>, CliError> {
    let Some(spec) = spec else {
        let step = n.div_ceil(10).max(1);
        let mut ks: Vec<u64> = (0..n).step_by(step as usize).collect();
        ks.push(n);
        return Ok(ks);
    };
    let bad = |why: &str| CliError::usage(format!("invalid k grid {spec:?}: {why}"));
    let num = |s: &str| {
        s.trim()
            .parse::<u64>()
            .map_err(|_| bad("expected non-negative integers"))
    };
    let mut ks = Vec::new();
    for part in spec.split(',') {
        let fields: Vec<&str> = part.split(':').collect();
        match fields.as_slice() {
            [k] => ks.push(num(k)?),
            [a, b] | [a, b, _] => {
                let (a, b) = (num(a)?, num(b)?);
                let step = if fields.len() == 3 { num(fields[2])? } else { 1 };
                if a > b || step == 0 {
                    return Err(bad("ranges need start <= end and a positive step"));
                }
                ks.extend((a..=b).step_by(step as usize));
            }
            _ => return Err(bad("too many ':'")),
        }
    }
    if let Some(k) = ks.iter().find(|&&k| k > n) {
        return Err(bad(&format!("k = {k} exceeds n = {n}")));
    }
    Ok(ks)
}

/// The largest safe fleet for each `k`, with its expected number of placed requests.
pub fn analyze(n: u64, delta_hat: f64, budget: Option<u64>, ks: &[u64]) -> Result<Vec<AnalyzeRow>, CliError> {
    let budget = budget.unwrap_or(n);
    if ks.is_empty() {
        return Err(CliError::usage("the k grid is empty"));
    }
    ks.iter()
        .map(|&k| {
            let cfg = max_paral(n, delta_hat, budget, k)?;
            let eh = expected_happy(&BallsBinsParams::new(n, k, cfg.s, cfg.d)?);
            Ok(AnalyzeRow {
                n,
                delta_hat,
                budget,
                k,
                s: cfg.s,
                d: cfg.d,
                expected_happy: eh,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SimulateOptions {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub write_series: bool,
    /// Worker threads; `None` uses one per core.
    pub jobs: Option<usize>,
    pub progress: bool,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUNS_FILE: &str = "runs.csv";
pub const SERIES_DIR: &str = "series";

pub fn series_file_name(seed: u64) -> String {
    format!("{SERIES_DIR}/seed-{seed}.csv")
}

/// Runs every seed in parallel. A single collector writes each run's series
/// as it finishes and appends to `runs.csv` in seed-list order, so the files
/// do not depend on scheduling.
pub fn simulate(opts: &SimulateOptions) -> Result<RunManifest, CliError> {
    opts.config.validate()?;
    if opts.seeds.is_empty() {
        return Err(CliError::usage("no seeds to run"));
    }
    // Resolve the dataset once up front so a bad name is a usage error, not a failed run.
    DatasetSpec::resolve(&opts.config.dataset)?;
    let out = &opts.out_dir;
    fs::create_dir_all(out).map_err(write_err(out))?;
    if opts.write_series {
        let dir = out.join(SERIES_DIR);
        fs::create_dir_all(&dir).map_err(write_err(&dir))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::usage(format!("cannot start worker threads: {e}")))?;

    let (tx, rx) = mpsc::channel::<(usize, Result<RunResult, SimError>)>();
    let pool = &pool;
    let (records, failure) = std::thread::scope(|scope| {
        scope.spawn(move || {
            pool.install(|| {
                opts.seeds.par_iter().enumerate().for_each_with(tx, |tx, (i, &seed)| {
                    let cfg = ExperimentConfig {
                        seed,
                        ..opts.config.clone()
                    };
                    // The collector only stops early on an output error; nothing left to report then.
                    let _ = tx.send((i, run_experiment(&cfg)));
                });
            })
        });
        collect_runs(opts, rx)
    })?;

    let seeds_done: Vec<u64> = records.iter().map(|r| r.seed).collect();
    let manifest = RunManifest::new(opts.config.clone(), seeds_done, records);
    let path = out.join(MANIFEST_FILE);
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(write_err(&path))?;
    match failure {
        Some(err) => Err(err),
        None => Ok(manifest),
    }
}

type Collected = (Vec<RunRecord>, Option<CliError>);

fn collect_runs(
    opts: &SimulateOptions,
    rx: mpsc::Receiver<(usize, Result<RunResult, SimError>)>,
) -> Result<Collected, CliError> {
    let runs_path = opts.out_dir.join(RUNS_FILE);
    let mut runs_csv = csv::Writer::from_writer(create(&runs_path)?);
    runs_csv.write_record(RUNS_HEADER)?;
    runs_csv.flush().map_err(write_err(&runs_path))?;

    let mut done: BTreeMap<usize, RunRecord> = BTreeMap::new();
    let mut failed = Vec::new();
    let mut records = Vec::with_capacity(opts.seeds.len());
    let mut next = 0;
    let mut failure = None;
    for (i, result) in rx {
        let seed = opts.seeds[i];
        match result {
            Ok(run) => {
                let series_file = if opts.write_series {
                    let name = series_file_name(seed);
                    let path = opts.out_dir.join(&name);
                    let mut w = create(&path)?;
                    output::write_series(&mut w, &run.series)?;
                    w.flush().map_err(write_err(&path))?;
                    Some(name)
                } else {
                    None
                };
                if opts.progress {
                    let m = &run.metrics;
                    eprintln!(
                        "seed {seed}: decline ratio {}, throughput {:.3}, {} slots{}",
                        m.decline_ratio.map_or("n/a".to_string(), |d| format!("{:.5}", d)),
                        m.throughput,
                        m.slots,
                        if m.truncated { " (truncated)" } else { "" }
                    );
                }
                done.insert(
                    i,
                    RunRecord {
                        seed,
                        metrics: run.metrics,
                        series_file,
                    },
                );
            }
            Err(source) => {
                if opts.progress {
                    eprintln!("seed {seed}: failed: {source}");
                }
                failed.push(i);
                failure.get_or_insert(CliError::Run { seed, source });
            }
        }
        // Emit the longest finished prefix of the seed list.
        loop {
            if let Some(rec) = done.remove(&next) {
                runs_csv.write_record(output::runs_record(rec.seed, &rec.metrics, rec.series_file.as_deref()))?;
                records.push(rec);
            } else if !failed.contains(&next) {
                break;
            }
            next += 1;
        }
        runs_csv.flush().map_err(write_err(&runs_path))?;
    }
    Ok((records, failure))
}

/// Minimum host count over shuffled runs, with the per-run detail.
pub fn size(
    dataset: &str,
    replicas: u64,
    policies: &[PolicyConfig],
    runs: u64,
    seed: u64,
) -> Result<SizingReport, CliError> {
    if runs == 0 {
        return Err(CliError::usage("runs must be at least 1"));
    }
    let spec = DatasetSpec::resolve(dataset)?;
    Ok(size_hosts(&spec, replicas, policies, runs, seed)?)
}

/// Human-readable summary of the built-in datasets.
pub fn describe_datasets() -> Result<String, CliError> {
    let mut text = String::new();
    for name in BUILTIN_DATASETS {
        let spec = DatasetSpec::builtin(name)?;
        let shapes: Vec<String> = spec
            .host_shapes
            .iter()
            .map(|s| format!("{:?} x{}", s.capacity.to_vec(), s.weight))
            .collect();
        text.push_str(&format!(
            "{name}: {} flavors, {} requests per replica, resources {}, host shapes {}, reference fleets {} / {} hosts\n",
            spec.flavor_set().len(),
            spec.requests_per_replica(),
            spec.resources.join(","),
            shapes.join(" "),
            preset_hosts(name, HostPreset::Simulation).unwrap_or(0),
            preset_hosts(name, HostPreset::Parallelism).unwrap_or(0),
        ));
    }
    Ok(text)
}
