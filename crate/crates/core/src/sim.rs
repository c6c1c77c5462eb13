//! Time-slotted simulation of parallel schedulers placing requests on a cluster.
//!
//! Every slot runs, in order: departures, arrivals, an optional controller
//! tick, independent scheduler decisions against the slot-start state, and
//! resolution of the chosen assignments against the live state in a random
//! order. Declined requests are not retried.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::balls_bins::SlaBudget;
use crate::controller::{ApsrController, ControllerParams, EstimatorMode, FlavorCounters};
use crate::error::{ConfigError, SimError};
use crate::model::{ClusterState, Flavor, HostId, Lifetime, PlaceOutcome, Request, ResourceVector};
use crate::policy::{choose_from_sample, HostView, PolicyConfig, PolicyKind};
use crate::seed::derive_seed;
use crate::workload::{
    build_arrivals, preset_hosts, preset_replicas, ArrivalProcess, ArrivalSchedule, DatasetSpec, DepartureProcess,
    HostPreset,
};

const STREAM_TRACE: u64 = 1;
const STREAM_ARRIVALS: u64 = 2;
const STREAM_DEPARTURES: u64 = 3;
const STREAM_RESOLVE: u64 = 4;
const STREAM_SCHEDULER: u64 = 5;

pub const DEFAULT_MAX_SLOTS: u64 = 1_000_000;

/// How many schedulers run each slot.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SchedulerMode {
    Fixed {
        s: u64,
    },
    /// Sized every `period` slots by the sampling controller.
    Controller(ControllerParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Built-in dataset name or path to a dataset file.
    pub dataset: String,
    pub replicas: u64,
    pub hosts: usize,
    pub arrivals: ArrivalProcess,
    pub departures: DepartureProcess,
    pub policy: PolicyConfig,
    pub schedulers: SchedulerMode,
    pub delta_hat: f64,
    /// Per-slot query budget; `None` means one query per host.
    pub budget: Option<u64>,
    pub seed: u64,
    pub max_slots: u64,
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 10] = [
    "snapshot-nfv",
    "snapshot-google",
    "snapshot-amazon",
    "apsr-nfv",
    "apsr-google",
    "apsr-amazon",
    "budget-nfv",
    "mmpp-nfv",
    "parallelism-nfv",
    "parallelism-amazon",
];

impl ExperimentConfig {
    /// Static placement on a reference fleet: Poisson(20) arrivals, no departures.
    pub fn base(dataset: &str) -> Result<Self, ConfigError> {
        let replicas = preset_replicas(dataset).ok_or_else(|| ConfigError::UnknownDataset(dataset.to_string()))?;
        let hosts = preset_hosts(dataset, HostPreset::Simulation).expect("builtin dataset has a preset");
        Ok(Self {
            dataset: dataset.to_ascii_lowercase(),
            replicas,
            hosts,
            arrivals: ArrivalProcess::Poisson { rate: 20.0 },
            departures: DepartureProcess::None,
            policy: PolicyConfig::new(PolicyKind::Random),
            schedulers: SchedulerMode::Fixed { s: 10 },
            delta_hat: 0.05,
            budget: None,
            seed: 0,
            max_slots: DEFAULT_MAX_SLOTS,
        })
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        let apsr = |mut c: Self| {
            c.policy = PolicyConfig::new(PolicyKind::Apsr);
            c.schedulers = SchedulerMode::Controller(ControllerParams::default());
            c
        };
        let cfg = match name.to_ascii_lowercase().as_str() {
            "snapshot-nfv" => Self::base("nfv")?,
            "snapshot-google" => Self::base("google")?,
            "snapshot-amazon" => Self::base("amazon")?,
            "apsr-nfv" | "budget-nfv" => apsr(Self::base("nfv")?),
            "apsr-google" => apsr(Self::base("google")?),
            "apsr-amazon" => apsr(Self::base("amazon")?),
            "mmpp-nfv" => {
                let mut c = apsr(Self::base("nfv")?);
                c.replicas = 100;
                c.arrivals = ArrivalProcess::Mmpp {
                    high: 20.0,
                    low: 5.0,
                    switch_fraction: 0.2,
                };
                c.departures = DepartureProcess::Poisson { rate: 4.0 };
                c
            }
            "parallelism-nfv" => Self::parallelism("nfv", 10)?,
            "parallelism-amazon" => Self::parallelism("amazon", 1)?,
            _ => {
                return Err(ConfigError::invalid(
                    "preset",
                    format!("unknown preset {name:?}; expected one of {}", PRESETS.join(", ")),
                ))
            }
        };
        Ok(cfg)
    }

    fn parallelism(dataset: &str, replicas: u64) -> Result<Self, ConfigError> {
        let mut c = Self::base(dataset)?;
        c.hosts = preset_hosts(dataset, HostPreset::Parallelism).expect("builtin dataset has a preset");
        c.replicas = replicas;
        Ok(c)
    }

    pub fn sla(&self) -> Result<SlaBudget, ConfigError> {
        Ok(SlaBudget::new(
            self.delta_hat,
            self.budget.unwrap_or(self.hosts as u64),
        )?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.replicas == 0 {
            return Err(ConfigError::invalid("replicas", "must be at least 1"));
        }
        if self.hosts == 0 {
            return Err(ConfigError::invalid("hosts", "must be at least 1"));
        }
        if self.max_slots == 0 {
            return Err(ConfigError::invalid("max_slots", "must be at least 1"));
        }
        self.arrivals.validate()?;
        self.departures.validate()?;
        self.policy.validate()?;
        self.sla()?;
        match self.schedulers {
            SchedulerMode::Fixed { s: 0 } => Err(ConfigError::invalid("s", "must be at least 1")),
            SchedulerMode::Fixed { .. } => Ok(()),
            SchedulerMode::Controller(params) => {
                if self.policy.kind != PolicyKind::Apsr {
                    return Err(ConfigError::invalid(
                        "controller",
                        format!(
                            "the controller sizes sampling schedulers; policy {} needs a fixed s",
                            self.policy.kind
                        ),
                    ));
                }
                params.validate()
            }
        }
    }
}

/// Everything a simulation consumes: fleet, flavor set, trace and arrival counts.
#[derive(Clone, Debug)]
pub struct Workload {
    pub capacities: Vec<ResourceVector>,
    pub flavors: Vec<Flavor>,
    pub trace: Vec<Request>,
    pub arrivals: ArrivalSchedule,
}

impl Workload {
    /// Builds the trace and arrival schedule from the config's dataset and seed.
    pub fn from_config(config: &ExperimentConfig) -> Result<Self, ConfigError> {
        let spec = DatasetSpec::resolve(&config.dataset)?;
        Self::from_spec(config, &spec)
    }

    pub fn from_spec(config: &ExperimentConfig, spec: &DatasetSpec) -> Result<Self, ConfigError> {
        let trace = spec.build_trace(config.replicas, derive_seed(config.seed, &[STREAM_TRACE]))?;
        let arrivals = build_arrivals(
            config.arrivals,
            trace.len() as u64,
            derive_seed(config.seed, &[STREAM_ARRIVALS]),
        )?;
        Ok(Self {
            capacities: spec.host_capacities(config.hosts),
            flavors: spec.flavor_set(),
            trace,
            arrivals,
        })
    }
}

/// Per-slot counts. `attempts = successes + declines_no_host + declines_collision`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotMetrics {
    pub slot: u64,
    pub arrivals: u64,
    pub departures: u64,
    pub attempts: u64,
    pub successes: u64,
    pub declines_no_host: u64,
    pub declines_collision: u64,
    /// Host queries issued by schedulers.
    pub queries: u64,
    /// Host queries issued by an oracle controller census.
    pub controller_queries: u64,
    pub active_schedulers: u64,
    pub configured_schedulers: u64,
    pub queries_per_scheduler: u64,
    pub k_estimate: Option<f64>,
    pub utilization: f64,
    pub pending: u64,
    pub placed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub slots: u64,
    pub requests: u64,
    pub attempts: u64,
    pub successes: u64,
    pub declines_no_host: u64,
    pub declines_collision: u64,
    /// `None` when nothing was attempted.
    pub decline_ratio: Option<f64>,
    /// Successful placements per slot.
    pub throughput: f64,
    pub scheduler_queries: u64,
    pub controller_queries: u64,
    pub max_slot_queries: u64,
    /// Mean over slots of the schedulers that had a request to place.
    pub mean_active_schedulers: f64,
    pub mean_configured_schedulers: f64,
    pub peak_utilization: f64,
    pub final_utilization: f64,
    /// The run hit `max_slots` with requests still to arrive or pending.
    pub truncated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunResult {
    pub metrics: RunMetrics,
    pub series: Vec<SlotMetrics>,
}

/// One scheduler's choice for one request.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decision {
    pub host: Option<HostId>,
    pub queries: u64,
    /// Sample entries that could take the request; sampling schedulers only.
    pub sampled_available: Option<u64>,
}

enum Fleet {
    Fixed {
        s: u64,
        d: u64,
    },
    Controller {
        controller: ApsrController,
        counters: FlavorCounters,
    },
}

pub struct Simulation {
    cluster: ClusterState,
    flavors: Vec<Flavor>,
    trace: std::vec::IntoIter<Request>,
    arrivals: ArrivalSchedule,
    policy: PolicyConfig,
    departures: DepartureProcess,
    departure_rng: ChaCha8Rng,
    fleet: Fleet,
    seed: u64,
    slot: u64,
    totals: RunMetrics,
    active_sum: u64,
    configured_sum: u64,
}

impl Simulation {
    pub fn new(config: &ExperimentConfig, workload: Workload) -> Result<Self, ConfigError> {
        config.validate()?;
        if workload.capacities.is_empty() {
            return Err(ConfigError::invalid("hosts", "must be at least 1"));
        }
        if workload.arrivals.total() != workload.trace.len() as u64 {
            return Err(ConfigError::invalid(
                "arrivals",
                format!(
                    "schedule delivers {} requests but the trace has {}",
                    workload.arrivals.total(),
                    workload.trace.len()
                ),
            ));
        }
        let n = workload.capacities.len() as u64;
        let sla = SlaBudget::new(config.delta_hat, config.budget.unwrap_or(n))?;
        let fleet = match config.schedulers {
            SchedulerMode::Fixed { s } => Fleet::Fixed {
                s,
                d: (sla.budget / s).max(1),
            },
            SchedulerMode::Controller(params) => {
                let slots = workload.flavors.iter().map(|f| f.id.0 + 1).max().unwrap_or(0);
                Fleet::Controller {
                    controller: ApsrController::new(n, sla, params)?,
                    counters: FlavorCounters::new(slots),
                }
            }
        };
        Ok(Self {
            cluster: ClusterState::new(workload.capacities)?,
            flavors: workload.flavors,
            trace: workload.trace.into_iter(),
            arrivals: workload.arrivals,
            policy: config.policy,
            departures: config.departures,
            departure_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[STREAM_DEPARTURES])),
            fleet,
            seed: config.seed,
            slot: 0,
            totals: RunMetrics::default(),
            active_sum: 0,
            configured_sum: 0,
        })
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    /// The next slot to run.
    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Requests still to arrive or waiting in the queue.
    pub fn has_work(&self) -> bool {
        self.trace.len() > 0 || !self.cluster.pending().is_empty()
    }

    /// Current `(s, d)`.
    pub fn configuration(&self) -> (u64, u64) {
        match &self.fleet {
            Fleet::Fixed { s, d } => (*s, *d),
            Fleet::Controller { controller, .. } => {
                let c = controller.configuration();
                (c.s, c.d)
            }
        }
    }

    pub fn k_estimate(&self) -> Option<f64> {
        match &self.fleet {
            Fleet::Fixed { .. } => None,
            Fleet::Controller { controller, .. } => Some(controller.state().k_estimate),
        }
    }

    /// Decision of scheduler `index` in the current slot. Reads only the
    /// slot-start state and the scheduler's own random stream, so the order in
    /// which schedulers are evaluated cannot change any choice.
    pub fn decide(&self, index: u64, request: &Request) -> Result<Decision, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[STREAM_SCHEDULER, self.slot, index]));
        let hosts = self.cluster.hosts();
        if self.policy.kind.needs_snapshot() {
            let host = self
                .policy
                .choose(HostView::Snapshot(hosts), &request.demand, &mut rng)?;
            return Ok(Decision {
                host,
                queries: hosts.len() as u64,
                sampled_available: None,
            });
        }
        let (_, d) = self.configuration();
        let picks: Vec<HostId> = (0..d).map(|_| HostId(rng.random_range(0..hosts.len()))).collect();
        let found = picks.iter().filter(|id| hosts[id.0].fits(&request.demand)).count() as u64;
        Ok(Decision {
            host: choose_from_sample(hosts, &picks, &request.demand, &mut rng),
            queries: d,
            sampled_available: Some(found),
        })
    }

    /// Runs one slot and advances the clock.
    pub fn run_slot(&mut self) -> Result<SlotMetrics, SimError> {
        let t = self.slot;
        self.cluster.set_slot(t);

        let departures = match self.departures {
            DepartureProcess::None => 0,
            DepartureProcess::Lifetime { .. } => self.cluster.complete_due().len() as u64,
            DepartureProcess::Poisson { rate } => {
                let m = Poisson::new(rate)
                    .expect("validated rate")
                    .sample(&mut self.departure_rng) as usize;
                self.cluster.complete_random(m, &mut self.departure_rng).len() as u64
            }
        };

        let arrivals = self.arrivals.counts.get(t as usize).copied().unwrap_or(0);
        for _ in 0..arrivals {
            let mut request = self.trace.next().expect("schedule total matches the trace");
            request.arrival_slot = t;
            if let DepartureProcess::Lifetime { slots } = self.departures {
                request.lifetime = Lifetime::Slots(slots);
            }
            self.cluster.enqueue(request);
        }

        let mut controller_queries = 0;
        if let Fleet::Controller { controller, counters } = &mut self.fleet {
            if controller.is_tick(t) {
                let census = if controller.state().estimator_mode == EstimatorMode::Oracle {
                    controller_queries = self.cluster.n_hosts() as u64;
                    Some(self.cluster.census(&self.flavors))
                } else {
                    None
                };
                controller.tick(counters, census.as_ref())?;
            }
        }

        let (s, d) = self.configuration();
        let active = (s as usize).min(self.cluster.pending().len());
        let requests: Vec<Request> = (0..active).map(|_| self.cluster.dequeue().expect("counted")).collect();
        let mut decisions = Vec::with_capacity(active);
        for (i, request) in requests.iter().enumerate() {
            decisions.push(self.decide(i as u64, request)?);
        }

        let mut queries = 0;
        let mut assignments = Vec::with_capacity(active);
        let mut declines_no_host = 0;
        for (request, decision) in requests.iter().zip(&decisions) {
            queries += decision.queries;
            if let (Some(found), Fleet::Controller { counters, .. }) = (decision.sampled_available, &mut self.fleet) {
                counters.record(request.flavor, decision.queries, found);
            }
            match decision.host {
                Some(host) => assignments.push((request, host)),
                None => declines_no_host += 1,
            }
        }
        let mut resolve_rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[STREAM_RESOLVE, t]));
        assignments.shuffle(&mut resolve_rng);
        let mut successes = 0;
        let mut declines_collision = 0;
        for (request, host) in assignments {
            match self.cluster.place(request, host)? {
                PlaceOutcome::Placed => successes += 1,
                PlaceOutcome::Declined => declines_collision += 1,
            }
        }

        let metrics = SlotMetrics {
            slot: t,
            arrivals,
            departures,
            attempts: active as u64,
            successes,
            declines_no_host,
            declines_collision,
            queries,
            controller_queries,
            active_schedulers: active as u64,
            configured_schedulers: s,
            queries_per_scheduler: if self.policy.kind.needs_snapshot() {
                self.cluster.n_hosts() as u64
            } else {
                d
            },
            k_estimate: self.k_estimate(),
            utilization: self.cluster.utilization(),
            pending: self.cluster.pending().len() as u64,
            placed: self.cluster.n_placed() as u64,
        };
        self.accumulate(&metrics);
        self.slot += 1;
        Ok(metrics)
    }

    fn accumulate(&mut self, m: &SlotMetrics) {
        let r = &mut self.totals;
        r.slots += 1;
        r.requests += m.arrivals;
        r.attempts += m.attempts;
        r.successes += m.successes;
        r.declines_no_host += m.declines_no_host;
        r.declines_collision += m.declines_collision;
        r.scheduler_queries += m.queries;
        r.controller_queries += m.controller_queries;
        r.max_slot_queries = r.max_slot_queries.max(m.queries);
        r.peak_utilization = r.peak_utilization.max(m.utilization);
        r.final_utilization = m.utilization;
        self.active_sum += m.active_schedulers;
        self.configured_sum += m.configured_schedulers;
    }

    /// Aggregates over the slots run so far.
    pub fn metrics(&self) -> RunMetrics {
        let mut r = self.totals.clone();
        if r.attempts > 0 {
            r.decline_ratio = Some((r.attempts - r.successes) as f64 / r.attempts as f64);
        }
        if r.slots > 0 {
            r.throughput = r.successes as f64 / r.slots as f64;
            r.mean_active_schedulers = self.active_sum as f64 / r.slots as f64;
            r.mean_configured_schedulers = self.configured_sum as f64 / r.slots as f64;
        }
        r
    }

    /// Runs until the trace is exhausted and the queue is empty, or `max_slots` is reached.
    pub fn run(mut self, max_slots: u64) -> Result<RunResult, SimError> {
        let mut series = Vec::new();
        while self.has_work() && self.slot < max_slots {
            series.push(self.run_slot()?);
        }
        let mut metrics = self.metrics();
        metrics.truncated = self.has_work();
        Ok(RunResult { metrics, series })
    }
}

/// Builds the workload from `config` and runs it to completion.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunResult, SimError> {
    let workload = Workload::from_config(config)?;
    Simulation::new(config, workload)?.run(config.max_slots)
}
