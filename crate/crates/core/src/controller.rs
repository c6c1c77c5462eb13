//! The periodic APSR controller: estimate how many hosts are available,
//! then size the scheduler fleet with [`max_paral`].

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::balls_bins::{max_paral, Configuration, SlaBudget};
use crate::error::ConfigError;
use crate::model::{AvailabilityCensus, FlavorId};

/// Per-flavor sampling counters accumulated by the schedulers between ticks.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct FlavorCounters {
    /// `(queried, found_available)` indexed by flavor id.
    counts: Vec<(u64, u64)>,
}

impl FlavorCounters {
    pub fn new(n_flavors: usize) -> Self {
        Self {
            counts: vec![(0, 0); n_flavors],
        }
    }

    /// Adds one scheduler's observation. `found` is clamped to `queried`.
    pub fn record(&mut self, flavor: FlavorId, queried: u64, found: u64) {
        if flavor.0 >= self.counts.len() {
            self.counts.resize(flavor.0 + 1, (0, 0));
        }
        let entry = &mut self.counts[flavor.0];
        entry.0 += queried;
        entry.1 += found.min(queried);
    }

    pub fn get(&self, flavor: FlavorId) -> (u64, u64) {
        self.counts.get(flavor.0).copied().unwrap_or((0, 0))
    }

    pub fn reset(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = (0, 0));
    }

    /// Available fractions of the flavors that were queried at least once.
    fn ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.counts
            .iter()
            .filter(|(q, _)| *q > 0)
            .map(|&(q, f)| f as f64 / q as f64)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorMode {
    /// Normalized minimum over flavors (the conservative default).
    Min,
    /// Normalized mean over flavors.
    Avg,
    /// Exact minimum census over all hosts.
    Oracle,
}

impl EstimatorMode {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorMode::Min => "min",
            EstimatorMode::Avg => "avg",
            EstimatorMode::Oracle => "oracle",
        }
    }
}

impl fmt::Display for EstimatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorMode {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "min" => Ok(EstimatorMode::Min),
            "avg" | "average" => Ok(EstimatorMode::Avg),
            "oracle" => Ok(EstimatorMode::Oracle),
            other => Err(ConfigError::invalid(
                "estimator",
                format!("unknown estimator {other:?}"),
            )),
        }
    }
}

/// Counter-based estimate of available hosts, exponentially smoothed.
///
/// Flavors with no queries are skipped; with no queries at all the previous
/// estimate is returned unchanged. `Oracle` mode has no counter estimate and
/// also returns `prev_k`.
pub fn estimate_k(counters: &FlavorCounters, prev_k: f64, alpha: f64, n: u64, mode: EstimatorMode) -> f64 {
    let fraction = match mode {
        EstimatorMode::Min => counters.ratios().reduce(f64::min),
        EstimatorMode::Avg => {
            let (sum, count) = counters.ratios().fold((0.0, 0usize), |(s, c), r| (s + r, c + 1));
            (count > 0).then(|| sum / count as f64)
        }
        EstimatorMode::Oracle => None,
    };
    match fraction {
        Some(frac) => alpha * (n as f64 * frac) + (1.0 - alpha) * prev_k,
        None => prev_k,
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControllerParams {
    /// Reconfigure every `period` slots.
    pub period: u64,
    /// Smoothing weight of the newest estimate.
    pub alpha: f64,
    pub mode: EstimatorMode,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            period: 10,
            alpha: 0.1,
            mode: EstimatorMode::Min,
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.period == 0 {
            return Err(ConfigError::invalid("period", "must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ConfigError::invalid(
                "alpha",
                format!("{} is outside (0, 1]", self.alpha),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ControllerState {
    pub k_estimate: f64,
    /// The integer `k` handed to `max_paral` at the last tick.
    pub k_used: u64,
    pub s_current: u64,
    pub d_current: u64,
    pub period: u64,
    pub alpha: f64,
    pub estimator_mode: EstimatorMode,
}

#[derive(Clone, Debug)]
pub struct ApsrController {
    state: ControllerState,
    sla: SlaBudget,
    n: u64,
}

impl ApsrController {
    /// Starts with `k = n` and a single scheduler querying the whole budget.
    pub fn new(n: u64, sla: SlaBudget, params: ControllerParams) -> Result<Self, ConfigError> {
        params.validate()?;
        if n == 0 {
            return Err(ConfigError::invalid("hosts", "must be at least 1"));
        }
        SlaBudget::new(sla.delta_hat, sla.budget)?;
        Ok(Self {
            state: ControllerState {
                k_estimate: n as f64,
                k_used: n,
                s_current: 1,
                d_current: sla.budget,
                period: params.period,
                alpha: params.alpha,
                estimator_mode: params.mode,
            },
            sla,
            n,
        })
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn configuration(&self) -> Configuration {
        Configuration {
            s: self.state.s_current,
            d: self.state.d_current,
        }
    }

    pub fn sla(&self) -> SlaBudget {
        self.sla
    }

    /// Whether slot `t` is a reconfiguration slot (`t = T, 2T, ...`).
    pub fn is_tick(&self, slot: u64) -> bool {
        slot > 0 && slot.is_multiple_of(self.state.period)
    }

    /// Updates `k`, recomputes the fleet and resets the counters.
    ///
    /// Oracle mode requires `census` and uses its minimum directly.
    pub fn tick(
        &mut self,
        counters: &mut FlavorCounters,
        census: Option<&AvailabilityCensus>,
    ) -> Result<Configuration, ConfigError> {
        let st = &mut self.state;
        st.k_estimate = match st.estimator_mode {
            EstimatorMode::Oracle => {
                let census = census.ok_or_else(|| ConfigError::invalid("estimator", "oracle mode needs a census"))?;
                census.min().map_or(self.n, |k| k as u64) as f64
            }
            mode => estimate_k(counters, st.k_estimate, st.alpha, self.n, mode),
        };
        counters.reset();
        st.k_used = (st.k_estimate.floor().max(0.0) as u64).min(self.n);
        let cfg = max_paral(self.n, self.sla.delta_hat, self.sla.budget, st.k_used)?;
        st.s_current = cfg.s;
        st.d_current = cfg.d;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balls_bins::satisfy_sla;

    fn counters(entries: &[(u64, u64)]) -> FlavorCounters {
        let mut c = FlavorCounters::new(entries.len());
        for (i, &(q, f)) in entries.iter().enumerate() {
            c.record(FlavorId(i), q, f);
        }
        c
    }

    #[test]
    fn fully_available_is_a_fixed_point() {
        let c = counters(&[(50, 50), (40, 40)]);
        assert_eq!(estimate_k(&c, 100.0, 0.1, 100, EstimatorMode::Min), 100.0);
        assert_eq!(estimate_k(&c, 100.0, 0.1, 100, EstimatorMode::Avg), 100.0);
    }

    #[test]
    fn min_and_avg_examples() {
        let c = counters(&[(50, 25), (40, 10)]);
        let k_min = 100.0 * 0.25;
        assert!((estimate_k(&c, 30.0, 0.1, 100, EstimatorMode::Min) - (0.1 * k_min + 0.9 * 30.0)).abs() < 1e-12);
        assert!((estimate_k(&c, 30.0, 0.1, 100, EstimatorMode::Min) - 29.5).abs() < 1e-12);
        let k_avg = 100.0 * (0.5 + 0.25) / 2.0;
        assert!((estimate_k(&c, 30.0, 0.1, 100, EstimatorMode::Avg) - (0.1 * k_avg + 0.9 * 30.0)).abs() < 1e-12);
        assert!((estimate_k(&c, 30.0, 0.1, 100, EstimatorMode::Avg) - 30.75).abs() < 1e-12);
    }

    #[test]
    fn unqueried_flavors_are_skipped() {
        let c = counters(&[(0, 0), (40, 10)]);
        assert!((estimate_k(&c, 30.0, 1.0, 100, EstimatorMode::Min) - 25.0).abs() < 1e-12);
        let none = counters(&[(0, 0), (0, 0)]);
        assert_eq!(estimate_k(&none, 42.0, 0.5, 100, EstimatorMode::Min), 42.0);
        assert_eq!(estimate_k(&none, 42.0, 0.5, 100, EstimatorMode::Avg), 42.0);
    }

    #[test]
    fn zero_availability_decays_geometrically() {
        let n = 200;
        let sla = SlaBudget::new(0.05, n).unwrap();
        let mut ctl = ApsrController::new(n, sla, ControllerParams::default()).unwrap();
        let mut expected = n as f64;
        for _ in 0..30 {
            let mut c = counters(&[(100, 0), (100, 100)]);
            ctl.tick(&mut c, None).unwrap();
            expected *= 0.9;
            assert!((ctl.state().k_estimate - expected).abs() < 1e-9);
            assert_eq!(c, counters(&[(0, 0), (0, 0)]));
        }
    }

    #[test]
    fn oracle_tick_examples() {
        let n = 150;
        let sla = SlaBudget::new(0.05, n).unwrap();
        let params = ControllerParams {
            period: 1,
            alpha: 0.1,
            mode: EstimatorMode::Oracle,
        };
        let mut ctl = ApsrController::new(n, sla, params).unwrap();
        assert_eq!(ctl.configuration(), Configuration { s: 1, d: n });

        let empty = AvailabilityCensus {
            per_flavor: vec![(FlavorId(0), 150), (FlavorId(1), 150)],
        };
        let cfg = ctl.tick(&mut FlavorCounters::new(2), Some(&empty)).unwrap();
        assert_eq!(cfg, max_paral(n, 0.05, n, n).unwrap());
        assert!(cfg.s > 1);
        assert!(satisfy_sla(n, 0.05, n, cfg.s, cfg.d).unwrap());

        let full = AvailabilityCensus {
            per_flavor: vec![(FlavorId(0), 3), (FlavorId(1), 0)],
        };
        assert_eq!(
            ctl.tick(&mut FlavorCounters::new(2), Some(&full)).unwrap(),
            Configuration { s: 1, d: n }
        );
        assert!(ctl.tick(&mut FlavorCounters::new(2), None).is_err());
    }

    #[test]
    fn tick_schedule() {
        let sla = SlaBudget::new(0.05, 10).unwrap();
        let ctl = ApsrController::new(10, sla, ControllerParams::default()).unwrap();
        assert!(!ctl.is_tick(0));
        assert!(!ctl.is_tick(5));
        assert!(ctl.is_tick(10));
        assert!(ctl.is_tick(20));
    }

    #[test]
    fn rejects_bad_params() {
        let sla = SlaBudget::new(0.05, 10).unwrap();
        let bad_alpha = ControllerParams {
            alpha: 0.0,
            ..Default::default()
        };
        assert!(ApsrController::new(10, sla, bad_alpha).is_err());
        let bad_period = ControllerParams {
            period: 0,
            ..Default::default()
        };
        assert!(ApsrController::new(10, sla, bad_period).is_err());
        assert_eq!("average".parse::<EstimatorMode>(), Ok(EstimatorMode::Avg));
        assert!("median".parse::<EstimatorMode>().is_err());
    }
}
