//! Approximate cluster sizing: pack shuffled traces with a single scheduler,
//! opening a host whenever a request fits nowhere, and keep the smallest count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::dataset::DatasetSpec;
use crate::error::{ConfigError, PolicyError};
use crate::model::{Host, HostId, Request};
use crate::policy::{HostView, PolicyConfig};
use crate::seed::derive_seed;

const STREAM_TRACE: u64 = 1;
const STREAM_POLICY: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizingRun {
    pub run: u64,
    pub policy: String,
    pub trace_seed: u64,
    pub hosts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SizingReport {
    pub min_hosts: usize,
    pub runs: Vec<SizingRun>,
}

/// Packs `trace` in order, opening hosts in the dataset's shape rotation.
/// Returns the number of hosts opened.
pub fn pack_sequentially(
    spec: &DatasetSpec,
    trace: &[Request],
    policy: &PolicyConfig,
    seed: u64,
) -> Result<usize, ConfigError> {
    if policy.kind.needs_snapshot() {
        policy.validate()?;
    } else {
        return Err(PolicyError::SampleViewForSnapshotPolicy(policy.kind.name()).into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hosts: Vec<Host> = Vec::new();
    let mut shapes = spec.host_capacities(trace.len().max(1)).into_iter();
    for request in trace {
        let choice = if hosts.is_empty() {
            None
        } else {
            policy.choose(HostView::Snapshot(&hosts), &request.demand, &mut rng)?
        };
        let id = match choice {
            Some(id) => id,
            None => {
                let capacity = shapes.next().expect("one shape per request is enough");
                if !request.demand.fits_within(&capacity)? {
                    return Err(ConfigError::invalid(
                        "dataset",
                        format!("request {} does not fit an empty {:?} host", request.id, capacity),
                    ));
                }
                hosts.push(Host::new(HostId(hosts.len()), capacity));
                HostId(hosts.len() - 1)
            }
        };
        hosts[id.0].consume(&request.demand);
    }
    Ok(hosts.len())
}

/// Minimum host count over `runs` shuffled orders and every policy in `policies`.
pub fn size_hosts(
    spec: &DatasetSpec,
    replicas: u64,
    policies: &[PolicyConfig],
    runs: u64,
    seed: u64,
) -> Result<SizingReport, ConfigError> {
    if runs == 0 {
        return Err(ConfigError::invalid("runs", "must be at least 1"));
    }
    if policies.is_empty() {
        return Err(ConfigError::invalid("policies", "at least one policy is required"));
    }
    let mut report = SizingReport {
        min_hosts: usize::MAX,
        runs: Vec::new(),
    };
    for run in 0..runs {
        let trace_seed = derive_seed(seed, &[STREAM_TRACE, run]);
        let trace = spec.build_trace(replicas, trace_seed)?;
        for policy in policies {
            let policy_seed = derive_seed(seed, &[STREAM_POLICY, run]);
            let hosts = pack_sequentially(spec, &trace, policy, policy_seed)?;
            report.min_hosts = report.min_hosts.min(hosts);
            report.runs.push(SizingRun {
                run,
                policy: policy.kind.name().to_string(),
                trace_seed,
                hosts,
            });
        }
    }
    Ok(report)
}

/// Seed handed to the policy RNG of a given run; exposed for replaying runs.
pub fn sizing_policy_seed(seed: u64, run: u64) -> u64 {
    derive_seed(seed, &[STREAM_POLICY, run])
}
