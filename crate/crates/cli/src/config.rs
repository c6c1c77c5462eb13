//! Flat TOML experiment files.
//!
//! Every key is optional. A `preset` (or a built-in `dataset`) supplies the
//! starting point and the remaining keys override it:
//!
//! | key | meaning |
//! |-----|---------|
//! | `preset` | named starting configuration, see `apsr simulate --help` |
//! | `dataset` | `nfv`, `google`, `amazon` or a path to a dataset file |
//! | `replicas` | copies of the dataset in the trace |
//! | `hosts` | host count, or `"simulation"` / `"parallelism"` for the reference fleet sizes |
//! | `policy` | `ff`, `wf`, `random`, `ffr`, `wfr`, `adaptive`, `distfromdiag`, `apsr` |
//! | `lambda_rank` | candidate count for `ffr` / `wfr` |
//! | `adaptive_threshold` | load at which `adaptive` switches from worst fit to first fit |
//! | `s` | fixed number of parallel schedulers |
//! | `controller` | `true` to size the scheduler fleet with the controller (`apsr` only) |
//! | `delta_hat` | target decline ratio |
//! | `budget` | per-slot host query budget, defaults to the host count |
//! | `T` | controller period in slots |
//! | `alpha` | smoothing weight of the availability estimate |
//! | `estimator` | `min`, `avg` or `oracle` |
//! | `arrivals` | `poisson` or `mmpp` |
//! | `lambda_a` | arrival rate (the high rate for `mmpp`) |
//! | `lambda_low` | `mmpp` rate after the switch |
//! | `switch_fraction` | `mmpp` share of the trace that arrives at the high rate |
//! | `lambda_d` | rate of Poisson departures per slot |
//! | `lifetime` | fixed request lifetime in slots |
//! | `seed` | run seed when `seeds` is absent |
//! | `seeds` | list of seeds, or a string such as `"0-4,9"` |
//! | `max_slots` | stop a run after this many slots |

use std::path::Path;

use apsr_core::controller::ControllerParams;
use apsr_core::workload::{preset_hosts, preset_replicas, HostPreset};
use apsr_core::{ArrivalProcess, DepartureProcess, EstimatorMode, ExperimentConfig, PolicyKind, SchedulerMode};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum HostsKey {
    Count(usize),
    Preset(String),
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum SeedsKey {
    List(Vec<u64>),
    Spec(String),
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    pub dataset: Option<String>,
    pub replicas: Option<u64>,
    pub hosts: Option<HostsKey>,
    pub policy: Option<String>,
    pub lambda_rank: Option<usize>,
    pub adaptive_threshold: Option<f64>,
    pub s: Option<u64>,
    pub controller: Option<bool>,
    pub delta_hat: Option<f64>,
    pub budget: Option<u64>,
    #[serde(rename = "T", alias = "period")]
    pub period: Option<u64>,
    pub alpha: Option<f64>,
    pub estimator: Option<String>,
    pub arrivals: Option<String>,
    pub lambda_a: Option<f64>,
    pub lambda_low: Option<f64>,
    pub switch_fraction: Option<f64>,
    pub lambda_d: Option<f64>,
    pub lifetime: Option<u64>,
    pub seed: Option<u64>,
    pub seeds: Option<SeedsKey>,
    pub max_slots: Option<u64>,
}

impl ConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|source| CliError::ParseConfig {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::ReadInput {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path)
    }

    /// Applies the keys on top of the preset or dataset defaults.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match (&self.preset, &self.dataset) {
            (Some(preset), _) => ExperimentConfig::preset(preset)?,
            (None, Some(dataset)) if preset_replicas(dataset).is_some() => ExperimentConfig::base(dataset)?,
            (None, Some(_)) => {
                if self.replicas.is_none() || self.hosts.is_none() {
                    return Err(CliError::usage(
                        "a dataset file needs explicit `replicas` and `hosts` keys",
                    ));
                }
                ExperimentConfig::base("nfv")?
            }
            (None, None) => return Err(CliError::usage("set `preset` or `dataset`")),
        };

        if let Some(dataset) = &self.dataset {
            if !cfg.dataset.eq_ignore_ascii_case(dataset) {
                if let Some(r) = preset_replicas(dataset) {
                    cfg.replicas = r;
                    cfg.hosts = preset_hosts(dataset, HostPreset::Simulation).expect("builtin dataset");
                }
                cfg.dataset = dataset.clone();
            }
        }
        if let Some(r) = self.replicas {
            cfg.replicas = r;
        }
        match &self.hosts {
            Some(HostsKey::Count(n)) => cfg.hosts = *n,
            Some(HostsKey::Preset(name)) => {
                let preset = match name.as_str() {
                    "simulation" => HostPreset::Simulation,
                    "parallelism" => HostPreset::Parallelism,
                    other => {
                        return Err(CliError::usage(format!(
                            "hosts = {other:?}: expected a count, \"simulation\" or \"parallelism\""
                        )))
                    }
                };
                cfg.hosts = preset_hosts(&cfg.dataset, preset)
                    .ok_or_else(|| CliError::usage(format!("no reference host count for dataset {:?}", cfg.dataset)))?;
            }
            None => {}
        }

        if let Some(policy) = &self.policy {
            cfg.policy.kind = policy.parse::<PolicyKind>().map_err(apsr_core::ConfigError::from)?;
        }
        if let Some(l) = self.lambda_rank {
            cfg.policy.lambda_rank = l;
        }
        if let Some(t) = self.adaptive_threshold {
            cfg.policy.adaptive_threshold = t;
        }

        self.resolve_schedulers(&mut cfg)?;

        if let Some(d) = self.delta_hat {
            cfg.delta_hat = d;
        }
        if let Some(b) = self.budget {
            cfg.budget = Some(b);
        }

        self.resolve_arrivals(&mut cfg)?;
        cfg.departures = match (self.lambda_d, self.lifetime) {
            (Some(_), Some(_)) => return Err(CliError::usage("set at most one of `lambda_d` and `lifetime`")),
            (Some(rate), None) => DepartureProcess::Poisson { rate },
            (None, Some(slots)) => DepartureProcess::Lifetime { slots },
            (None, None) => cfg.departures,
        };

        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(m) = self.max_slots {
            cfg.max_slots = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_schedulers(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        let tuning = self.period.is_some() || self.alpha.is_some() || self.estimator.is_some();
        cfg.schedulers = match (self.controller, self.s) {
            (Some(true), Some(_)) => return Err(CliError::usage("`s` conflicts with `controller = true`")),
            (Some(true), None) => match cfg.schedulers {
                SchedulerMode::Controller(p) => SchedulerMode::Controller(p),
                SchedulerMode::Fixed { .. } => SchedulerMode::Controller(ControllerParams::default()),
            },
            (_, Some(s)) => SchedulerMode::Fixed { s },
            (Some(false), None) => match cfg.schedulers {
                SchedulerMode::Fixed { s } => SchedulerMode::Fixed { s },
                SchedulerMode::Controller(_) => {
                    return Err(CliError::usage("`controller = false` needs a scheduler count `s`"))
                }
            },
            (None, None) => cfg.schedulers,
        };
        match &mut cfg.schedulers {
            SchedulerMode::Controller(params) => {
                if let Some(t) = self.period {
                    params.period = t;
                }
                if let Some(a) = self.alpha {
                    params.alpha = a;
                }
                if let Some(e) = &self.estimator {
                    params.mode = e.parse::<EstimatorMode>()?;
                }
            }
            SchedulerMode::Fixed { .. } if tuning => {
                return Err(CliError::usage(
                    "`T`, `alpha` and `estimator` only apply with `controller = true`",
                ))
            }
            SchedulerMode::Fixed { .. } => {}
        }
        Ok(())
    }

    fn resolve_arrivals(&self, cfg: &mut ExperimentConfig) -> Result<(), CliError> {
        let kind = self.arrivals.as_deref().unwrap_or(match cfg.arrivals {
            ArrivalProcess::Poisson { .. } => "poisson",
            ArrivalProcess::Mmpp { .. } => "mmpp",
        });
        cfg.arrivals = match (kind, cfg.arrivals) {
            ("poisson", ArrivalProcess::Poisson { rate }) => ArrivalProcess::Poisson {
                rate: self.lambda_a.unwrap_or(rate),
            },
            ("poisson", ArrivalProcess::Mmpp { high, .. }) => ArrivalProcess::Poisson {
                rate: self.lambda_a.unwrap_or(high),
            },
            ("mmpp", current) => {
                let (high, low, switch_fraction) = match current {
                    ArrivalProcess::Mmpp {
                        high,
                        low,
                        switch_fraction,
                    } => (high, low, switch_fraction),
                    ArrivalProcess::Poisson { rate } => (rate, 5.0, 0.2),
                };
                ArrivalProcess::Mmpp {
                    high: self.lambda_a.unwrap_or(high),
                    low: self.lambda_low.unwrap_or(low),
                    switch_fraction: self.switch_fraction.unwrap_or(switch_fraction),
                }
            }
            (other, _) => {
                return Err(CliError::usage(format!(
                    "arrivals = {other:?}: expected \"poisson\" or \"mmpp\""
                )))
            }
        };
        if !matches!(cfg.arrivals, ArrivalProcess::Mmpp { .. })
            && (self.lambda_low.is_some() || self.switch_fraction.is_some())
        {
            return Err(CliError::usage(
                "`lambda_low` and `switch_fraction` need `arrivals = \"mmpp\"`",
            ));
        }
        Ok(())
    }

    /// Seeds to run: the `seeds` key, else the single `seed` of the resolved config.
    pub fn seeds(&self, resolved: &ExperimentConfig) -> Result<Vec<u64>, CliError> {
        match &self.seeds {
            Some(SeedsKey::List(list)) => non_empty(list.clone()),
            Some(SeedsKey::Spec(spec)) => parse_seeds(spec),
            None => Ok(vec![resolved.seed]),
        }
    }
}

fn non_empty(seeds: Vec<u64>) -> Result<Vec<u64>, CliError> {
    if seeds.is_empty() {
        return Err(CliError::usage("the seed list is empty"));
    }
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(CliError::usage(format!("seed {dup} is listed twice")));
    }
    Ok(seeds)
}

/// Parses `"0-4,9"` style seed lists; ranges are inclusive.
pub fn parse_seeds(spec: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::usage(format!("invalid seed list {spec:?}; expected e.g. \"0-4,9\""));
    let mut seeds = Vec::new();
    for part in spec.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| bad())?;
                let b: u64 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(part.parse().map_err(|_| bad())?),
        }
    }
    non_empty(seeds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ConfigFile {
        ConfigFile::parse(text, Path::new("test.toml")).unwrap()
    }

    #[test]
    fn preset_with_overrides() {
        let cfg = parse("preset = \"snapshot-nfv\"\npolicy = \"ff\"\ns = 4\nseed = 7\n")
            .resolve()
            .unwrap();
        assert_eq!(cfg.policy.kind, PolicyKind::Ff);
        assert_eq!(cfg.schedulers, SchedulerMode::Fixed { s: 4 });
        assert_eq!((cfg.hosts, cfg.replicas, cfg.seed), (837, 30, 7));
    }

    #[test]
    fn controller_keys() {
        let cfg = parse("dataset = \"nfv\"\npolicy = \"apsr\"\ncontroller = true\nT = 1\nestimator = \"oracle\"\n")
            .resolve()
            .unwrap();
        match cfg.schedulers {
            SchedulerMode::Controller(p) => {
                assert_eq!(p.period, 1);
                assert_eq!(p.mode, EstimatorMode::Oracle);
                assert_eq!(p.alpha, 0.1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dataset_switch_takes_its_fleet() {
        let cfg = parse("preset = \"snapshot-nfv\"\ndataset = \"amazon\"\n")
            .resolve()
            .unwrap();
        assert_eq!((cfg.hosts, cfg.replicas), (876, 7));
        let cfg = parse("dataset = \"amazon\"\nhosts = \"parallelism\"\n")
            .resolve()
            .unwrap();
        assert_eq!(cfg.hosts, 126);
    }

    #[test]
    fn arrivals_and_departures() {
        let cfg = parse("dataset = \"nfv\"\narrivals = \"mmpp\"\nlambda_d = 4.0\n")
            .resolve()
            .unwrap();
        assert_eq!(
            cfg.arrivals,
            ArrivalProcess::Mmpp {
                high: 20.0,
                low: 5.0,
                switch_fraction: 0.2
            }
        );
        assert_eq!(cfg.departures, DepartureProcess::Poisson { rate: 4.0 });
        let cfg = parse("preset = \"mmpp-nfv\"\narrivals = \"poisson\"\nlambda_a = 7.5\nlifetime = 30\n")
            .resolve()
            .unwrap();
        assert_eq!(cfg.arrivals, ArrivalProcess::Poisson { rate: 7.5 });
        assert_eq!(cfg.departures, DepartureProcess::Lifetime { slots: 30 });
    }

    #[test]
    fn invalid_configs() {
        for text in [
            "",
            "dataset = \"azure\"",
            "preset = \"nope\"",
            "dataset = \"nfv\"\nbogus = 1",
            "dataset = \"nfv\"\npolicy = \"ff\"\ncontroller = true",
            "dataset = \"nfv\"\ns = 3\nT = 5",
            "dataset = \"nfv\"\nlambda_a = 0.0",
            "dataset = \"nfv\"\nlambda_d = 1.0\nlifetime = 3",
            "dataset = \"nfv\"\nhosts = \"huge\"",
            "dataset = \"nfv\"\nlambda_low = 2.0",
            "dataset = \"some/file.txt\"",
        ] {
            let parsed = ConfigFile::parse(text, Path::new("x.toml"));
            let err = parsed.and_then(|c| c.resolve()).expect_err(text);
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0-3,9").unwrap(), vec![0, 1, 2, 3, 9]);
        assert_eq!(parse_seeds("5").unwrap(), vec![5]);
        for bad in ["", "3-1", "a", "1,1", "1-"] {
            assert!(parse_seeds(bad).is_err(), "{bad}");
        }
        let file = parse("dataset = \"nfv\"\nseeds = [4, 2]\n");
        let cfg = file.resolve().unwrap();
        assert_eq!(file.seeds(&cfg).unwrap(), vec![4, 2]);
        let file = parse("dataset = \"nfv\"\nseed = 11\n");
        assert_eq!(file.seeds(&file.resolve().unwrap()).unwrap(), vec![11]);
    }
}
