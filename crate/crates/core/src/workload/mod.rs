//! Datasets, request traces, arrival processes and host sizing.

mod arrivals;
mod dataset;
mod sizing;

pub use arrivals::{build_arrivals, ArrivalProcess, ArrivalSchedule, DepartureProcess};
pub use dataset::{DatasetFlavor, DatasetSpec, HostShape, BUILTIN_DATASETS};
pub use sizing::{pack_sequentially, size_hosts, sizing_policy_seed, SizingReport, SizingRun};

/// Which reference fleet size to use for a dataset.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum HostPreset {
    /// Fleets used by the slotted placement experiments.
    Simulation,
    /// Smaller fleets used by the single-scheduler parallelism study.
    Parallelism,
}

/// Published host count for a built-in dataset.
pub fn preset_hosts(dataset: &str, preset: HostPreset) -> Option<usize> {
    let n = match (dataset.to_ascii_lowercase().as_str(), preset) {
        ("nfv", HostPreset::Simulation) => 837,
        ("amazon", HostPreset::Simulation) => 876,
        ("google", HostPreset::Simulation) => 5989,
        ("nfv", HostPreset::Parallelism) => 279,
        ("amazon", HostPreset::Parallelism) => 126,
        ("google", HostPreset::Parallelism) => 5989,
        _ => return None,
    };
    Some(n)
}

/// Replica count the simulation experiments use for a built-in dataset.
pub fn preset_replicas(dataset: &str) -> Option<u64> {
    match dataset.to_ascii_lowercase().as_str() {
        "nfv" => Some(30),
        "amazon" => Some(7),
        "google" => Some(1),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        assert_eq!(preset_hosts("nfv", HostPreset::Simulation), Some(837));
        assert_eq!(preset_hosts("Amazon", HostPreset::Parallelism), Some(126));
        assert_eq!(preset_hosts("azure", HostPreset::Simulation), None);
        assert_eq!(preset_replicas("google"), Some(1));
    }
}
