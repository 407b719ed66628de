use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fairgrid_core::harness::sweep::seed_range;
use fairgrid_core::harness::{run_batch, Exec, RunMode, Scenario};

fn scenario(mode: RunMode) -> Scenario {
    let mut s = Scenario { mode, periods: 48, ..Scenario::default() };
    s.feeders.ders = vec![4];
    s.feeders.households = vec![10];
    s
}

fn seed_sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("seed_sweep");
    group.sample_size(10);
    for mode in [RunMode::Centralized, RunMode::Blockchain] {
        let seeds = seed_range(&scenario(mode), 1, 8);
        for exec in [Exec::Sequential, Exec::Parallel] {
            group.bench_with_input(BenchmarkId::new(format!("{mode}"), format!("{exec:?}")), &seeds, |b, seeds| {
                b.iter(|| run_batch(seeds, exec))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, seed_sweep);
criterion_main!(benches);
