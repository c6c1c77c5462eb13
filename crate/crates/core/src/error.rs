//! Error types shared across the crate.

use thiserror::Error;

use crate::model::{HostId, RequestId};

/// Violations of the cluster model's contracts.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("resource dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("resource amount {0} is negative or not finite")]
    InvalidAmount(f64),
    #[error("flavor demand must have at least one strictly positive coordinate")]
    ZeroDemand,
    #[error("duplicate flavor id {0}")]
    DuplicateFlavor(usize),
    #[error("availability exceeds capacity or is negative on host {0}")]
    AvailabilityOutOfRange(HostId),
    #[error("unknown host {0}")]
    UnknownHost(HostId),
    #[error("request {0} is not placed")]
    NotPlaced(RequestId),
    #[error("request {0} is already placed")]
    AlreadyPlaced(RequestId),
    #[error("lifetime must be at least one slot")]
    ZeroLifetime,
}

/// Out-of-range arguments to the balls-and-bins formulas.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("bin count n must be positive")]
    ZeroBins,
    #[error("available bins k={k} exceeds n={n}")]
    AvailableExceedsBins { k: u64, n: u64 },
    #[error("agent count s must be positive")]
    ZeroAgents,
    #[error("success count f={f} exceeds trials s={s}")]
    SuccessesExceedTrials { f: u64, s: u64 },
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("target decline ratio {0} is outside [0, 1]")]
    DeclineRatio(f64),
    #[error("query budget must be at least 1")]
    ZeroBudget,
    #[error("trial count must be at least 1")]
    ZeroTrials,
}

/// Misconfigured placement policies or views.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("host {0} has a zero-capacity resource coordinate")]
    ZeroCapacity(HostId),
    #[error("policy {0} requires a full snapshot but was given a sample view")]
    SampleViewForSnapshotPolicy(&'static str),
    #[error("policy {0} was given an empty host view")]
    EmptyView(&'static str),
    #[error("unknown policy kind {0:?}")]
    UnknownKind(String),
    #[error("lambda rank must be at least 1")]
    ZeroLambda,
    #[error("adaptive threshold {0} is outside [0, 1]")]
    Threshold(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Invalid experiment, dataset or workload configuration.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown dataset {0:?}")]
    UnknownDataset(String),
    #[error("dataset parse error at line {line}: {message}")]
    DatasetParse { line: usize, message: String },
    #[error("invalid parameter {name}: {message}")]
    Invalid { name: &'static str, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

impl ConfigError {
    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            name,
            message: message.into(),
        }
    }
}

/// Failures while running a simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Param(#[from] ParamError),
}
