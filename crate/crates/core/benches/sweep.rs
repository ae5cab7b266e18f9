use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use stockflow_core::corpus::BASELINE_ID;
use stockflow_core::normalize_name;
use stockflow_core::par::Execution;
use stockflow_core::scenario::{sweep_with, Registry, Scenario, SweepSpec};

fn sweeps(c: &mut Criterion) {
    let reg = Registry::with_bundled();
    let mut group = c.benchmark_group("hiring_delay_sweep");
    group.sample_size(20);
    for n in [4usize, 16, 64] {
        let spec = SweepSpec {
            base: Scenario::new("base", BASELINE_ID).with("A", 1.0),
            param: normalize_name("HIRING DELAY").unwrap(),
            values: (0..n).map(|i| 0.5 + 0.125 * i as f64).collect(),
        };
        for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
            group.bench_with_input(BenchmarkId::new(name, n), &spec, |b, spec| {
                b.iter(|| black_box(sweep_with(&reg, spec, exec).unwrap()))
            });
        }
    }
    group.finish();
}

fn single_run(c: &mut Criterion) {
    let reg = Registry::with_bundled();
    let m = reg.get(BASELINE_ID).unwrap();
    c.bench_function("baseline_run", |b| {
        b.iter(|| black_box(m.simulate(&Default::default(), 0).unwrap()))
    });
}

criterion_group!(benches, sweeps, single_run);
criterion_main!(benches);
