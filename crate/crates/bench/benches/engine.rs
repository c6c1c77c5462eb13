use std::hint::black_box;

use apsr_core::*;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn analytic(c: &mut Criterion) {
    let mut g = c.benchmark_group("analytic");
    for n in [279u64, 837, 5989] {
        g.bench_with_input(BenchmarkId::new("expected_happy", n), &n, |b, &n| {
            let p = BallsBinsParams::new(n, n / 3, 40, n / 40).unwrap();
            b.iter(|| expected_happy(black_box(&p)))
        });
        g.bench_with_input(BenchmarkId::new("max_paral", n), &n, |b, &n| {
            b.iter(|| max_paral(black_box(n), 0.05, n, n / 3).unwrap())
        });
    }
    g.finish();
}

/// A fleet of 837 unit hosts at random fill levels.
fn fleet(rng: &mut ChaCha8Rng) -> Vec<Host> {
    let unit = ResourceVector::new(&[1.0, 1.0]).unwrap();
    (0..837)
        .map(|i| {
            let a = rng.random_range(0..=1000) as f64 / 1000.0;
            let m = rng.random_range(0..=1000) as f64 / 1000.0;
            Host::with_available(HostId(i), unit.clone(), ResourceVector::new(&[a, m]).unwrap()).unwrap()
        })
        .collect()
}

fn policies(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let hosts = fleet(&mut rng);
    let demand = ResourceVector::new(&[0.25, 0.125]).unwrap();
    let mut g = c.benchmark_group("choose");
    for kind in PolicyKind::ALL {
        let policy = PolicyConfig::new(kind);
        g.bench_function(kind.to_string(), |b| {
            b.iter(|| {
                policy
                    .choose(HostView::Snapshot(black_box(&hosts)), &demand, &mut rng)
                    .unwrap()
            })
        });
    }
    g.finish();
}

fn experiment(c: &mut Criterion) {
    let mut cfg = ExperimentConfig::preset("apsr-nfv").unwrap();
    cfg.replicas = 3;
    cfg.hosts = 85;
    let mut g = c.benchmark_group("experiment");
    g.sample_size(10);
    g.bench_function("apsr_controller_nfv_small", |b| {
        b.iter(|| run_experiment(black_box(&cfg)).unwrap())
    });
    cfg.policy = PolicyConfig::new(PolicyKind::Random);
    cfg.schedulers = SchedulerMode::Fixed { s: 10 };
    g.bench_function("random_s10_nfv_small", |b| {
        b.iter(|| run_experiment(black_box(&cfg)).unwrap())
    });
    g.finish();
}

criterion_group!(benches, analytic, policies, experiment);
criterion_main!(benches);
