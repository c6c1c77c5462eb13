//! Per-slot arrival and departure processes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ArrivalProcess {
    /// `Poisson(rate)` arrivals every slot.
    Poisson { rate: f64 },
    /// Rate `high` until `switch_fraction` of the trace has arrived, `low` afterwards.
    Mmpp { high: f64, low: f64, switch_fraction: f64 },
}

impl ArrivalProcess {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |name, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ConfigError::invalid(name, format!("arrival rate {v} must be positive")))
            }
        };
        match *self {
            ArrivalProcess::Poisson { rate } => positive("lambda_a", rate),
            ArrivalProcess::Mmpp {
                high,
                low,
                switch_fraction,
            } => {
                positive("lambda_a", high)?;
                positive("lambda_low", low)?;
                if !(0.0..=1.0).contains(&switch_fraction) {
                    return Err(ConfigError::invalid("switch_fraction", "must lie in [0, 1]"));
                }
                Ok(())
            }
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DepartureProcess {
    /// Requests never leave.
    None,
    /// Each slot, `Poisson(rate)` uniformly chosen placed requests leave.
    Poisson { rate: f64 },
    /// Every request leaves a fixed number of slots after it arrived.
    Lifetime { slots: u64 },
}

impl DepartureProcess {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            DepartureProcess::Poisson { rate } if !(rate.is_finite() && rate > 0.0) => Err(ConfigError::invalid(
                "lambda_d",
                format!("departure rate {rate} must be positive"),
            )),
            DepartureProcess::Lifetime { slots: 0 } => Err(ConfigError::invalid("lifetime", "must be at least 1")),
            _ => Ok(()),
        }
    }
}

/// Number of arrivals in each slot; sums to the trace length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ArrivalSchedule {
    pub counts: Vec<u64>,
}

impl ArrivalSchedule {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn slots(&self) -> usize {
        self.counts.len()
    }
}

/// Draws per-slot arrival counts until `trace_length` requests have arrived.
/// The final slot is truncated so the total is exact.
pub fn build_arrivals(process: ArrivalProcess, trace_length: u64, seed: u64) -> Result<ArrivalSchedule, ConfigError> {
    process.validate()?;
    if trace_length == 0 {
        return Err(ConfigError::invalid("trace_length", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let poisson = |rate: f64| Poisson::new(rate).expect("validated rate");
    let (first, second, switch_at) = match process {
        ArrivalProcess::Poisson { rate } => (poisson(rate), poisson(rate), u64::MAX),
        ArrivalProcess::Mmpp {
            high,
            low,
            switch_fraction,
        } => (
            poisson(high),
            poisson(low),
            (switch_fraction * trace_length as f64).ceil() as u64,
        ),
    };
    let mut counts = Vec::new();
    let mut arrived = 0u64;
    while arrived < trace_length {
        let dist = if arrived < switch_at { &first } else { &second };
        let draw = dist.sample(&mut rng) as u64;
        let n = draw.min(trace_length - arrived);
        counts.push(n);
        arrived += n;
    }
    Ok(ArrivalSchedule { counts })
}
