use apsr_core::balls_bins::SLA_EPSILON;
use apsr_core::controller::{estimate_k, FlavorCounters};
use apsr_core::policy::choose_from_sample;
use apsr_core::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rv(v: &[f64]) -> ResourceVector {
    ResourceVector::new(v).unwrap()
}

/// Demands on a 0.001 grid, like the dataset tables.
fn demand() -> impl Strategy<Value = [f64; 2]> {
    (1u32..=600, 0u32..=600).prop_map(|(a, b)| [a as f64 / 1000.0, b as f64 / 1000.0])
}

fn hosts_strategy() -> impl Strategy<Value = Vec<Host>> {
    prop::collection::vec((0u32..=1000, 0u32..=1000), 1..12).prop_map(|avail| {
        avail
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| {
                Host::with_available(HostId(i), rv(&[1.0, 1.0]), rv(&[a as f64 / 1000.0, b as f64 / 1000.0])).unwrap()
            })
            .collect()
    })
}

#[derive(Clone, Debug)]
enum Op {
    Place { demand: [f64; 2], host: usize },
    Complete(usize),
}

fn ops() -> impl Strategy<Value = Vec<Op>> {
    prop::collection::vec(
        prop_oneof![
            (demand(), 0usize..4).prop_map(|(demand, host)| Op::Place { demand, host }),
            (0usize..64).prop_map(Op::Complete),
        ],
        0..80,
    )
}

fn closed_form_happy(n: u64, k: u64, s: u64, d: u64) -> f64 {
    if k == 0 || d == 0 {
        return 0.0;
    }
    let sigma = 1.0 - ((n - k) as f64 / n as f64).powi(d as i32);
    k as f64 * (1.0 - (1.0 - sigma / k as f64).powi(s as i32))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn capacity_is_conserved(ops in ops()) {
        let mut cluster = ClusterState::new(vec![rv(&[1.0, 1.0]); 4]).unwrap();
        let flavor = |d: &[f64; 2]| Flavor::new(FlavorId(0), rv(d)).unwrap();
        let mut next = 0;
        for op in ops {
            match op {
                Op::Place { demand, host } => {
                    let r = Request::new(RequestId(next), &flavor(&demand), 0, Lifetime::Infinite).unwrap();
                    next += 1;
                    let fits = cluster.host(HostId(host)).unwrap().fits(&r.demand);
                    let out = cluster.place(&r, HostId(host)).unwrap();
                    prop_assert_eq!(out == PlaceOutcome::Placed, fits);
                }
                Op::Complete(i) => {
                    if cluster.n_placed() > 0 {
                        let id = *cluster.placements().get_index(i % cluster.n_placed()).unwrap().0;
                        cluster.complete(id).unwrap();
                    }
                }
            }
            prop_assert!(cluster.conservation_holds());
            for h in cluster.hosts() {
                prop_assert!(h.available().fits_within(h.capacity()).unwrap());
            }
        }
    }

    #[test]
    fn place_then_complete_restores_host(hosts in hosts_strategy(), d in demand(), pick in 0usize..12) {
        let mut cluster = ClusterState::new(hosts.iter().map(|h| h.capacity().clone())).unwrap();
        // Fill each host to the generated availability first.
        for (i, h) in hosts.iter().enumerate() {
            let used: Vec<f64> = (0..2).map(|j| h.capacity().get(j) - h.available().get(j)).collect();
            if used.iter().any(|&u| u > 0.0) {
                let f = Flavor::new(FlavorId(0), rv(&used)).unwrap();
                let r = Request::new(RequestId(1000 + i), &f, 0, Lifetime::Infinite).unwrap();
                prop_assert_eq!(cluster.place(&r, HostId(i)).unwrap(), PlaceOutcome::Placed);
            }
        }
        let host = HostId(pick % hosts.len());
        let before = cluster.host(host).unwrap().clone();
        let f = Flavor::new(FlavorId(1), rv(&d)).unwrap();
        let r = Request::new(RequestId(0), &f, 0, Lifetime::Infinite).unwrap();
        if cluster.place(&r, host).unwrap() == PlaceOutcome::Placed {
            cluster.complete(r.id).unwrap();
        }
        prop_assert_eq!(cluster.host(host).unwrap(), &before);
    }

    #[test]
    fn census_never_grows_while_placing(ops in prop::collection::vec((demand(), 0usize..4), 0..30)) {
        let flavors: Vec<Flavor> = [[0.1, 0.1], [0.5, 0.2], [0.3, 0.6]]
            .iter()
            .enumerate()
            .map(|(i, d)| Flavor::new(FlavorId(i), rv(d)).unwrap())
            .collect();
        let mut cluster = ClusterState::new(vec![rv(&[1.0, 1.0]); 4]).unwrap();
        let mut prev = cluster.census(&flavors);
        for (i, (d, host)) in ops.into_iter().enumerate() {
            let f = Flavor::new(FlavorId(9), rv(&d)).unwrap();
            cluster.place(&Request::new(RequestId(i), &f, 0, Lifetime::Infinite).unwrap(), HostId(host)).unwrap();
            let now = cluster.census(&flavors);
            for (a, b) in now.per_flavor.iter().zip(&prev.per_flavor) {
                prop_assert!(a.1 <= b.1);
            }
            prev = now;
        }
    }

    #[test]
    fn expected_happy_bounds_and_monotonicity(n in 1u64..300, k_frac in 0.0f64..=1.0, s in 1u64..60, d in 0u64..40) {
        let k = ((n as f64) * k_frac).floor() as u64;
        let eh = expected_happy(&BallsBinsParams::new(n, k, s, d).unwrap());
        prop_assert!(eh >= -1e-12);
        prop_assert!(eh <= (s.min(k)) as f64 + 1e-9);
        prop_assert!((eh - closed_form_happy(n, k, s, d)).abs() <= 1e-9 * (1.0 + eh));
        if k < n {
            let more_k = expected_happy(&BallsBinsParams::new(n, k + 1, s, d).unwrap());
            prop_assert!(more_k >= eh - 1e-9);
        }
        let more_d = expected_happy(&BallsBinsParams::new(n, k, s, d + 1).unwrap());
        prop_assert!(more_d >= eh - 1e-9);
    }

    #[test]
    fn max_paral_matches_scan(n in 1u64..400, delta_hat in 0.0f64..0.3, b_frac in 0.0f64..=1.0, k_frac in 0.0f64..=1.0) {
        let budget = ((n as f64 * b_frac).ceil() as u64).max(1);
        let k = (n as f64 * k_frac).floor() as u64;
        let cfg = max_paral(n, delta_hat, budget, k).unwrap();
        prop_assert!(cfg.s >= 1 && cfg.d >= 1);
        prop_assert!(cfg.s * cfg.d <= budget);
        let meets = |s: u64| closed_form_happy(n, k, s, budget / s) >= s as f64 * (1.0 - delta_hat) - SLA_EPSILON * s as f64;
        let mut scan = 1;
        while scan < budget && meets(scan + 1) {
            scan += 1;
        }
        prop_assert_eq!(cfg.s, scan);
        prop_assert_eq!(cfg.d, budget / scan);
    }

    #[test]
    fn estimator_stays_in_range(
        counts in prop::collection::vec((0u64..50, 0u64..50), 1..6),
        prev in 0.0f64..=100.0,
        alpha in 0.01f64..=1.0,
    ) {
        let mut c = FlavorCounters::new(counts.len());
        for (i, &(q, f)) in counts.iter().enumerate() {
            c.record(FlavorId(i), q.max(f), f.min(q.max(f)));
        }
        let min = estimate_k(&c, prev, alpha, 100, EstimatorMode::Min);
        let avg = estimate_k(&c, prev, alpha, 100, EstimatorMode::Avg);
        prop_assert!((0.0..=100.0).contains(&min));
        prop_assert!((0.0..=100.0).contains(&avg));
        prop_assert!(min <= avg + 1e-12);
    }

    #[test]
    fn snapshot_policies_pick_available_hosts(hosts in hosts_strategy(), d in demand(), seed in any::<u64>(), lambda in 1usize..4) {
        let demand = rv(&d);
        let any_fits = hosts.iter().any(|h| h.fits(&demand));
        for kind in PolicyKind::ALL {
            let policy = PolicyConfig::new(kind).with_lambda(lambda);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let choice = policy.choose(HostView::Snapshot(&hosts), &demand, &mut rng).unwrap();
            match choice {
                Some(id) => prop_assert!(hosts[id.0].fits(&demand), "{kind} picked a full host"),
                None => prop_assert!(!any_fits, "{kind} declined with room available"),
            }
            let mut rng2 = ChaCha8Rng::seed_from_u64(seed);
            prop_assert_eq!(policy.choose(HostView::Snapshot(&hosts), &demand, &mut rng2).unwrap(), choice);
        }
    }

    #[test]
    fn rank_one_randomized_fits_are_deterministic(hosts in hosts_strategy(), d in demand(), seed in any::<u64>()) {
        let demand = rv(&d);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let choose = |kind, rng: &mut ChaCha8Rng| {
            PolicyConfig::new(kind).with_lambda(1).choose(HostView::Snapshot(&hosts), &demand, rng).unwrap()
        };
        prop_assert_eq!(choose(PolicyKind::Ffr, &mut rng), choose(PolicyKind::Ff, &mut rng));
        prop_assert_eq!(choose(PolicyKind::Wfr, &mut rng), choose(PolicyKind::Wf, &mut rng));
    }

    #[test]
    fn sample_choice_is_an_available_sampled_host(hosts in hosts_strategy(), d in demand(), picks in prop::collection::vec(0usize..12, 0..8), seed in any::<u64>()) {
        let demand = rv(&d);
        let picks: Vec<HostId> = picks.into_iter().map(|p| HostId(p % hosts.len())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match choose_from_sample(&hosts, &picks, &demand, &mut rng) {
            Some(id) => {
                prop_assert!(picks.contains(&id));
                prop_assert!(hosts[id.0].fits(&demand));
            }
            None => prop_assert!(picks.iter().all(|id| !hosts[id.0].fits(&demand))),
        }
    }

    #[test]
    fn shuffled_traces_share_a_multiset(a in any::<u64>(), b in any::<u64>()) {
        let nfv = DatasetSpec::builtin("nfv").unwrap();
        let key = |seed| {
            let mut v: Vec<Vec<i64>> = nfv.build_trace(1, seed).unwrap().iter().map(|r| r.demand.units().to_vec()).collect();
            v.sort();
            v
        };
        prop_assert_eq!(key(a), key(b));
    }
}
