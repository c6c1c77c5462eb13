//! Placement policies: given a view of hosts and a request, pick a host or decline.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::PolicyError;
use crate::model::{Host, HostId, ResourceVector};

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    /// First fit: lowest-id available host.
    Ff,
    /// Worst fit: least loaded available host.
    Wf,
    /// Uniform over available hosts.
    Random,
    /// Uniform over the `lambda_rank` lowest-id available hosts.
    Ffr,
    /// Uniform over the `lambda_rank` least-loaded available hosts.
    Wfr,
    /// Worst fit at low system load, first fit above the threshold.
    Adaptive,
    /// Keeps a host's usage proportional across resources.
    DistFromDiag,
    /// Uniform over the distinct available hosts in a `d`-host sample.
    Apsr,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 8] = [
        PolicyKind::Ff,
        PolicyKind::Wf,
        PolicyKind::Random,
        PolicyKind::Ffr,
        PolicyKind::Wfr,
        PolicyKind::Adaptive,
        PolicyKind::DistFromDiag,
        PolicyKind::Apsr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Ff => "ff",
            PolicyKind::Wf => "wf",
            PolicyKind::Random => "random",
            PolicyKind::Ffr => "ffr",
            PolicyKind::Wfr => "wfr",
            PolicyKind::Adaptive => "adaptive",
            PolicyKind::DistFromDiag => "distfromdiag",
            PolicyKind::Apsr => "apsr",
        }
    }

    /// Whether the policy needs the state of every host for each decision.
    pub fn needs_snapshot(self) -> bool {
        self != PolicyKind::Apsr
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PolicyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| PolicyError::UnknownKind(s.to_string()))
    }
}

pub const DEFAULT_LAMBDA_RANK: usize = 5;
pub const DEFAULT_ADAPTIVE_THRESHOLD: f64 = 0.6;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub lambda_rank: usize,
    pub adaptive_threshold: f64,
}

impl PolicyConfig {
    pub fn new(kind: PolicyKind) -> Self {
        Self {
            kind,
            lambda_rank: DEFAULT_LAMBDA_RANK,
            adaptive_threshold: DEFAULT_ADAPTIVE_THRESHOLD,
        }
    }

    pub fn with_lambda(mut self, lambda_rank: usize) -> Self {
        self.lambda_rank = lambda_rank;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.adaptive_threshold = threshold;
        self
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.lambda_rank == 0 {
            return Err(PolicyError::ZeroLambda);
        }
        if !(0.0..=1.0).contains(&self.adaptive_threshold) {
            return Err(PolicyError::Threshold(self.adaptive_threshold));
        }
        Ok(())
    }
}

/// What a scheduler observed before deciding.
#[derive(Copy, Clone, Debug)]
pub enum HostView<'a> {
    /// Every host, indexed by id.
    Snapshot(&'a [Host]),
    /// Ids drawn with replacement, resolved against `hosts`.
    Sample { hosts: &'a [Host], picks: &'a [HostId] },
}

/// Max over resources of the used fraction of capacity.
pub fn host_load(host: &Host) -> Result<f64, PolicyError> {
    let cap = host.capacity().units();
    let avail = host.available().units();
    let mut load = 0.0f64;
    for (c, a) in cap.iter().zip(avail) {
        if *c <= 0 {
            return Err(PolicyError::ZeroCapacity(host.id));
        }
        load = load.max((c - a) as f64 / *c as f64);
    }
    Ok(load)
}

/// Distance of the host's post-placement usage vector from the all-equal diagonal.
pub fn diagonal_distance(host: &Host, demand: &ResourceVector) -> Result<f64, PolicyError> {
    let cap = host.capacity().units();
    let avail = host.available().units();
    let dim = cap.len();
    let mut usage = Vec::with_capacity(dim);
    for j in 0..dim {
        if cap[j] <= 0 {
            return Err(PolicyError::ZeroCapacity(host.id));
        }
        usage.push((cap[j] - avail[j] + demand.units()[j]) as f64 / cap[j] as f64);
    }
    let mean = usage.iter().sum::<f64>() / dim as f64;
    Ok(usage.iter().map(|u| (u - mean).powi(2)).sum::<f64>().sqrt())
}

/// Mean host load over a full snapshot.
pub fn mean_load(hosts: &[Host]) -> Result<f64, PolicyError> {
    if hosts.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for h in hosts {
        total += host_load(h)?;
    }
    Ok(total / hosts.len() as f64)
}

impl PolicyConfig {
    /// Picks a host for `demand`, or `None` to decline.
    pub fn choose<R: Rng + ?Sized>(
        &self,
        view: HostView<'_>,
        demand: &ResourceVector,
        rng: &mut R,
    ) -> Result<Option<HostId>, PolicyError> {
        let hosts = match view {
            HostView::Snapshot(hosts) => hosts,
            HostView::Sample { hosts, picks } => {
                if self.kind.needs_snapshot() {
                    return Err(PolicyError::SampleViewForSnapshotPolicy(self.kind.name()));
                }
                return Ok(choose_from_sample(hosts, picks, demand, rng));
            }
        };
        if hosts.is_empty() {
            return Err(PolicyError::EmptyView(self.kind.name()));
        }
        if let Some(h) = hosts.first() {
            if h.capacity().dim() != demand.dim() {
                return Err(crate::error::ModelError::DimensionMismatch {
                    expected: h.capacity().dim(),
                    found: demand.dim(),
                }
                .into());
            }
        }
        let available = || hosts.iter().filter(|h| h.fits(demand));
        let choice = match self.kind {
            PolicyKind::Ff => available().next().map(|h| h.id),
            PolicyKind::Wf => min_by_score(available(), host_load)?,
            PolicyKind::Random => {
                let ids: Vec<HostId> = available().map(|h| h.id).collect();
                pick(&ids, rng)
            }
            PolicyKind::Ffr => {
                let ids: Vec<HostId> = available().take(self.lambda_rank).map(|h| h.id).collect();
                pick(&ids, rng)
            }
            PolicyKind::Wfr => {
                let mut ranked = Vec::new();
                for h in available() {
                    ranked.push((host_load(h)?, h.id));
                }
                let top = self.lambda_rank.min(ranked.len());
                let cmp = |a: &(f64, HostId), b: &(f64, HostId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if top > 0 && top < ranked.len() {
                    ranked.select_nth_unstable_by(top - 1, cmp);
                }
                ranked.truncate(top);
                ranked.sort_by(cmp);
                let ids: Vec<HostId> = ranked.into_iter().map(|(_, id)| id).collect();
                pick(&ids, rng)
            }
            PolicyKind::Adaptive => {
                if mean_load(hosts)? < self.adaptive_threshold {
                    min_by_score(available(), host_load)?
                } else {
                    available().next().map(|h| h.id)
                }
            }
            PolicyKind::DistFromDiag => min_by_score(available(), |h| diagonal_distance(h, demand))?,
            PolicyKind::Apsr => {
                let ids: Vec<HostId> = hosts.iter().map(|h| h.id).collect();
                choose_from_sample(hosts, &ids, demand, rng)
            }
        };
        Ok(choice)
    }
}

/// Collapses a with-replacement sample to its distinct available hosts and picks one uniformly.
pub fn choose_from_sample<R: Rng + ?Sized>(
    hosts: &[Host],
    picks: &[HostId],
    demand: &ResourceVector,
    rng: &mut R,
) -> Option<HostId> {
    let mut ids: Vec<HostId> = picks
        .iter()
        .copied()
        .filter(|id| hosts.get(id.0).is_some_and(|h| h.fits(demand)))
        .collect();
    ids.sort_unstable();
    ids.dedup();
    pick(&ids, rng)
}

fn pick<R: Rng + ?Sized>(ids: &[HostId], rng: &mut R) -> Option<HostId> {
    match ids.len() {
        0 => None,
        1 => Some(ids[0]),
        len => Some(ids[rng.random_range(0..len)]),
    }
}

/// Lowest score wins; ties go to the lowest id (iteration order is ascending id).
fn min_by_score<'a>(
    hosts: impl Iterator<Item = &'a Host>,
    score: impl Fn(&Host) -> Result<f64, PolicyError>,
) -> Result<Option<HostId>, PolicyError> {
    let mut best: Option<(f64, HostId)> = None;
    for h in hosts {
        let s = score(h)?;
        if best.is_none_or(|(b, _)| s < b) {
            best = Some((s, h.id));
        }
    }
    Ok(best.map(|(_, id)| id))
}
