use std::io::Write;
use std::path::PathBuf;

use apsr_core::sim::PRESETS;
use apsr_core::{DatasetSpec, PolicyConfig, PolicyKind};
use clap::{Args, Parser, Subcommand};

use crate::commands::{self, SimulateOptions};
use crate::config::{parse_seeds, ConfigFile};
use crate::error::CliError;
use crate::output;

#[derive(Debug, Parser)]
#[command(
    name = "apsr",
    version,
    about = "Parallel VM placement experiments with decline-ratio guarantees"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tabulate the largest safe scheduler fleet (s, d) over a grid of available-host counts.
    Analyze(AnalyzeArgs),
    /// Run a simulation config over one or more seeds.
    Simulate(SimulateArgs),
    /// Estimate the host count needed to place a dataset with a single scheduler.
    SizeHosts(SizeHostsArgs),
    /// List the built-in datasets, or print one as a dataset file.
    Datasets(DatasetsArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Number of hosts.
    #[arg(long)]
    pub n: u64,
    /// Target decline ratio.
    #[arg(long, default_value_t = 0.05)]
    pub delta_hat: f64,
    /// Per-slot query budget [default: n].
    #[arg(long)]
    pub budget: Option<u64>,
    /// Available-host counts, e.g. "0,10,50" or "0:800:100" [default: 11 points from 0 to n].
    #[arg(long)]
    pub k: Option<String>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(after_help = presets_help())]
pub struct SimulateArgs {
    /// TOML experiment file.
    pub config: Option<PathBuf>,
    /// Start from a named preset (when the config file has no `preset` key).
    #[arg(long)]
    pub preset: Option<String>,
    /// Seeds to run, e.g. "0-4" or "1,7,9"; overrides the config's seeds.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Output directory for manifest.json, runs.csv and series/.
    #[arg(long)]
    pub out: PathBuf,
    /// Skip the per-slot series files.
    #[arg(long)]
    pub no_series: bool,
    /// Worker threads [default: one per core].
    #[arg(long)]
    pub jobs: Option<usize>,
    /// No progress lines on standard error.
    #[arg(long, short)]
    pub quiet: bool,
}

fn presets_help() -> String {
    format!("Presets: {}", PRESETS.join(", "))
}

#[derive(Debug, Args)]
pub struct SizeHostsArgs {
    /// Built-in dataset name or dataset file.
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value_t = 1)]
    pub replicas: u64,
    /// Shuffled traces to try.
    #[arg(long, default_value_t = 10)]
    pub runs: u64,
    /// Comma-separated snapshot policies.
    #[arg(long, default_value = "ff,wf,random")]
    pub policies: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Per-run detail as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DatasetsArgs {
    /// Print this dataset's table.
    #[arg(long)]
    pub show: Option<String>,
}

fn write_stdout(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout.write_all(text.as_bytes()).map_err(|source| CliError::Write {
        path: PathBuf::from("<stdout>"),
        source,
    })
}

/// Executes a parsed command; results go to files or `stdout`, progress to standard error.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(a) => {
            let ks = commands::parse_k_grid(a.k.as_deref(), a.n)?;
            let rows = commands::analyze(a.n, a.delta_hat, a.budget, &ks)?;
            match a.out {
                Some(path) => {
                    let file = std::fs::File::create(&path).map_err(|source| CliError::Write { path, source })?;
                    output::write_analyze(file, &rows)
                }
                None => output::write_analyze(stdout, &rows),
            }
        }
        Command::Simulate(a) => {
            let mut file = match &a.config {
                Some(path) => ConfigFile::load(path)?,
                None => ConfigFile::default(),
            };
            match (&a.preset, &file.preset) {
                (Some(_), Some(_)) => {
                    return Err(CliError::usage(
                        "--preset given but the config file already sets `preset`",
                    ))
                }
                (Some(p), None) => file.preset = Some(p.clone()),
                _ => {}
            }
            if a.config.is_none() && a.preset.is_none() {
                return Err(CliError::usage("give a config file or --preset"));
            }
            let config = file.resolve()?;
            let seeds = match &a.seeds {
                Some(spec) => parse_seeds(spec)?,
                None => file.seeds(&config)?,
            };
            let manifest = commands::simulate(&SimulateOptions {
                config,
                seeds,
                out_dir: a.out.clone(),
                write_series: !a.no_series,
                jobs: a.jobs,
                progress: !a.quiet,
            })?;
            let agg = &manifest.aggregate;
            write_stdout(
                stdout,
                &format!(
                    "{} runs written to {}; mean decline ratio {}, mean throughput {}\n",
                    manifest.runs.len(),
                    a.out.display(),
                    agg.decline_ratio.mean.map_or("n/a".into(), |v| v.to_string()),
                    agg.throughput.mean.map_or("n/a".into(), |v| v.to_string()),
                ),
            )
        }
        Command::SizeHosts(a) => {
            let policies = a
                .policies
                .split(',')
                .map(|p| p.trim().parse::<PolicyKind>().map(PolicyConfig::new))
                .collect::<Result<Vec<_>, _>>()
                .map_err(apsr_core::ConfigError::from)?;
            let report = commands::size(&a.dataset, a.replicas, &policies, a.runs, a.seed)?;
            if let Some(path) = a.out {
                let file = std::fs::File::create(&path).map_err(|source| CliError::Write { path, source })?;
                output::write_sizing(file, &report.runs)?;
            }
            write_stdout(stdout, &format!("{}\n", report.min_hosts))
        }
        Command::Datasets(a) => match a.show {
            Some(name) => {
                let text = DatasetSpec::builtin_source(&name)
                    .ok_or_else(|| CliError::from(apsr_core::ConfigError::UnknownDataset(name.clone())))?;
                write_stdout(stdout, text)
            }
            None => write_stdout(stdout, &commands::describe_datasets()?),
        },
    }
}
