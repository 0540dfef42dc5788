use criterion::{criterion_group, criterion_main, Criterion};
use mgmarket::par::Execution;
use mgmarket::phase::{log_grid, mg_grid, sweep, SweepOptions, WindowPolicy};

fn bench_sweep(c: &mut Criterion) {
    let configs = mg_grid(31, &log_grid(0.1, 4.0, 6), 1.0, 1.0, 9);
    let opts = |execution| SweepOptions {
        seeds: 4,
        windows: WindowPolicy {
            burn_per_state: 20,
            measure_per_state: 100,
            min_burn: 0,
            min_measure: 1000,
        },
        execution,
    };
    let mut group = c.benchmark_group("mg_sweep");
    group.sample_size(10);
    group.bench_function("parallel", |b| b.iter(|| sweep(&configs, &opts(Execution::Parallel)).unwrap()));
    group.bench_function("sequential", |b| b.iter(|| sweep(&configs, &opts(Execution::Sequential)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_sweep);
criterion_main!(benches);
