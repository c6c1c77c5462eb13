//! Statistical and brute-force checks against independent references.

use apsr_core::policy::choose_from_sample;
use apsr_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn rv(v: &[f64]) -> ResourceVector {
    ResourceVector::new(v).unwrap()
}

/// Availability pattern: even hosts are empty, odd hosts are full.
fn half_full(n: usize) -> Vec<Host> {
    (0..n)
        .map(|i| {
            let avail = if i % 2 == 0 { [1.0, 1.0] } else { [0.0, 0.0] };
            Host::with_available(HostId(i), rv(&[1.0, 1.0]), rv(&avail)).unwrap()
        })
        .collect()
}

#[test]
fn random_policy_is_uniform_over_available_hosts() {
    let hosts = half_full(20);
    let demand = rv(&[0.5, 0.5]);
    let policy = PolicyConfig::new(PolicyKind::Random);
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let draws = 50_000;
    let mut counts = vec![0u64; hosts.len()];
    for _ in 0..draws {
        let id = policy
            .choose(HostView::Snapshot(&hosts), &demand, &mut rng)
            .unwrap()
            .unwrap();
        counts[id.0] += 1;
    }
    assert!(counts.iter().skip(1).step_by(2).all(|&c| c == 0));
    let expected = draws as f64 / 10.0;
    let chi2: f64 = counts
        .iter()
        .step_by(2)
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let p = 1.0 - ChiSquared::new(9.0).unwrap().cdf(chi2);
    assert!(p > 0.001, "chi2 = {chi2}, p = {p}");
}

#[test]
fn sampling_agent_declines_at_rate_one_minus_sigma() {
    let (n, k, d) = (40u64, 10u64, 3u64);
    let hosts: Vec<Host> = (0..n as usize)
        .map(|i| {
            let avail = if (i as u64) < k { [1.0, 1.0] } else { [0.0, 0.0] };
            Host::with_available(HostId(i), rv(&[1.0, 1.0]), rv(&avail)).unwrap()
        })
        .collect();
    let demand = rv(&[0.5, 0.5]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let trials = 200_000u64;
    let mut declines = 0u64;
    for _ in 0..trials {
        let picks: Vec<HostId> = (0..d).map(|_| HostId(rng.random_range(0..n as usize))).collect();
        if choose_from_sample(&hosts, &picks, &demand, &mut rng).is_none() {
            declines += 1;
        }
    }
    let p = 1.0 - sigma(n, k, d).unwrap();
    let rate = declines as f64 / trials as f64;
    let se = (p * (1.0 - p) / trials as f64).sqrt();
    assert!((rate - p).abs() < 4.0 * se, "rate {rate} vs {p}");
}

#[test]
fn monte_carlo_potentially_happy_is_binomial_mean() {
    let params = BallsBinsParams::new(60, 12, 8, 4).unwrap();
    let mc = simulate_balls_and_bins(&params, 100_000, 77).unwrap();
    let expected = 8.0 * sigma(60, 12, 4).unwrap();
    assert!((mc.mean_potentially_happy - expected).abs() < 4.0 * mc.stderr_potentially_happy());
    assert_eq!(mc.selection_counts.iter().sum::<u64>(), mc.potentially_happy_total);
}

#[test]
fn census_matches_brute_force_on_a_dataset_fleet() {
    let google = DatasetSpec::builtin("google").unwrap();
    let flavors = google.flavor_set();
    let mut cluster = ClusterState::new(google.host_capacities(30)).unwrap();
    let trace = google.build_trace(1, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for r in trace.iter().take(200) {
        let host = HostId(rng.random_range(0..30));
        cluster.place(r, host).unwrap();
    }
    let census = cluster.census(&flavors);
    for f in &flavors {
        let brute = cluster
            .hosts()
            .iter()
            .filter(|h| (0..2).all(|j| f.demand.get(j) <= h.available().get(j) + 1e-12))
            .count();
        assert_eq!(census.get(f.id), Some(brute));
    }
}
