//! Multi-seed comparison batch, one thread against the rayon pool.

use criterion::{criterion_group, criterion_main, Criterion};
use mlc_core::batch::{run_batch, Execution};
use mlc_core::sim::{Planner, Scenario};
use mlc_core::GenerationTemplate;

fn bench(c: &mut Criterion) {
    let base = Scenario::new(Vec::new(), Planner::Pso);
    let template = GenerationTemplate::default();
    let seeds: Vec<u64> = (0..16).collect();
    let mut g = c.benchmark_group("batch_16_seeds");
    g.sample_size(10);
    for (name, mode) in [
        ("sequential", Execution::Sequential),
        ("parallel", Execution::Parallel),
    ] {
        g.bench_function(name, |b| {
            b.iter(|| run_batch(&base, &template, &seeds, mode).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
