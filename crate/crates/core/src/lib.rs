//! Parallel VM placement with decline-ratio guarantees.
//!
//! The crate provides the balls-and-bins model that predicts how many of `s`
//! parallel schedulers, each sampling `d` hosts, place their request; the
//! controller that picks the largest safe `(s, d)` under a query budget; the
//! classic snapshot placement heuristics it is compared against; the
//! workloads; and a slotted simulator tying them together.

pub mod balls_bins;
pub mod controller;
pub mod error;
pub mod model;
pub mod policy;
pub mod seed;
pub mod sim;
pub mod workload;

pub use balls_bins::{
    binom_pmf, expected_happy, expected_happy_given_f, max_paral, satisfy_sla, sigma, simulate_balls_and_bins,
    BallsBinsParams, Configuration, MonteCarloSummary, SlaBudget,
};
pub use controller::{estimate_k, ApsrController, ControllerParams, ControllerState, EstimatorMode, FlavorCounters};
pub use error::{ConfigError, ModelError, ParamError, PolicyError, SimError};
pub use model::{
    AvailabilityCensus, ClusterState, Flavor, FlavorId, Host, HostId, Lifetime, PlaceOutcome, Request, RequestId,
    ResourceVector,
};
pub use policy::{HostView, PolicyConfig, PolicyKind};
pub use seed::derive_seed;
pub use sim::{
    run_experiment, Decision, ExperimentConfig, RunMetrics, RunResult, SchedulerMode, Simulation, SlotMetrics, Workload,
};
pub use workload::{ArrivalProcess, DatasetSpec, DepartureProcess};
