use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use ergostat_core::chenstein::{exact_count_distribution, r1_estimate, BinaryProcess};
use ergostat_core::return_stats::count_visits;
use ergostat_core::short_returns::min_return_gap;
use ergostat_core::{Ball, CountingConfig, MapSystem, MarkedChain, MeasureEstimate};

fn orbit_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("count_visits");
    let systems = [
        ("doubling", MapSystem::doubling()),
        ("manneville-pomeau", MapSystem::manneville_pomeau(0.5).unwrap()),
        ("golden-rotation", MapSystem::golden_rotation()),
    ];
    for (name, system) in systems {
        let ball = Ball::new(&system, 0.3, 1e-3).unwrap();
        let cfg = CountingConfig::from_measure(ball, 10.0, MeasureEstimate::exact(1e-3)).unwrap();
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| count_visits(&system, black_box(0.123_456_789), &cfg).unwrap())
        });
    }
    group.finish();
}

fn exact_chain(c: &mut Criterion) {
    let chain = MarkedChain::new(
        vec![vec![0.8, 0.15, 0.05], vec![0.3, 0.5, 0.2], vec![0.4, 0.4, 0.2]],
        vec![false, false, true],
    )
    .unwrap();
    let mut group = c.benchmark_group("exact_chain");
    for n in [100usize, 1000] {
        group.bench_with_input(BenchmarkId::new("count_distribution", n), &n, |b, &n| {
            b.iter(|| exact_count_distribution(&chain, n).unwrap())
        });
    }
    let process = BinaryProcess::Exact(chain);
    group.bench_function("r1_n60", |b| b.iter(|| r1_estimate(&process, 60, 6).unwrap()));
    group.finish();
}

fn return_gap(c: &mut Criterion) {
    let system = MapSystem::manneville_pomeau(0.5).unwrap();
    let ball = Ball::new(&system, 0.6, 1e-6).unwrap();
    c.bench_function("min_return_gap_mp_12", |b| b.iter(|| min_return_gap(&system, &ball, 12).unwrap()));
}

criterion_group!(benches, orbit_steps, exact_chain, return_gap);
criterion_main!(benches);
