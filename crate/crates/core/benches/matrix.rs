use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use satsplit::harness::{execute, plan, Jobs, Preset, Scenario};
use satsplit::workloads::Measurement;

fn web_matrix() -> Vec<Scenario> {
    let mut s = Scenario::preset(Preset::Geo, 0.1);
    s.measurements = vec![Measurement::H3Web, Measurement::H1Web];
    s.repetitions = 8;
    vec![s]
}

fn bench_matrix(c: &mut Criterion) {
    let scenarios = web_matrix();
    let specs = plan(&scenarios);
    let threads = std::thread::available_parallelism().map_or(4, |n| n.get());
    let mut group = c.benchmark_group("web_matrix_32_runs");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    for (label, jobs) in [("sequential", Jobs::Sequential), ("threads", Jobs::Threads(threads))] {
        group.bench_with_input(BenchmarkId::from_parameter(label), &jobs, |b, &jobs| {
            b.iter(|| black_box(execute(&scenarios, &specs, jobs, None)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_matrix);
criterion_main!(benches);
