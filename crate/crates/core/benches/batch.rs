use braidmix::sim::{random_scenario, run_batch, ControllerKind, Execution, RandomSpec, Scenario};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn scenarios(controller: ControllerKind, count: u64) -> Vec<Scenario> {
    let spec = RandomSpec { strands: (3, 6), max_steps: 8, separation_fraction: (0.05, 0.2), controller };
    (0..count).map(|i| random_scenario(&spec, i)).collect()
}

fn batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("batch");
    group.sample_size(10);
    for (label, controller, count) in [
        ("exact", ControllerKind::ReparameterizeExact, 64),
        ("lq", ControllerKind::ReparameterizeLq, 16),
    ] {
        let input = scenarios(controller, count);
        for exec in [Execution::Sequential, Execution::Parallel] {
            group.bench_with_input(BenchmarkId::new(label, format!("{exec:?}")), &input, |b, s| {
                b.iter(|| run_batch(s, exec))
            });
        }
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
