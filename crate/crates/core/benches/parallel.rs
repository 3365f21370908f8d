use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use cvxq::harness::{multi_run, presets};
use cvxq::par::Execution;

fn grid_multi_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid_multi_run");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let mut cfg = presets::grid();
        cfg.episodes = 1;
        cfg.execution = exec;
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| multi_run(cfg, 4).unwrap())
        });
    }
    group.finish();
}

fn lqr_multi_run(c: &mut Criterion) {
    let mut group = c.benchmark_group("lqr_multi_run");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        let mut cfg = presets::lqr();
        cfg.episodes = 3;
        cfg.execution = exec;
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| multi_run(cfg, 4).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, grid_multi_run, lqr_multi_run);
criterion_main!(benches);
