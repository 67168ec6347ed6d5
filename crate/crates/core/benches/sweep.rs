use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use vsa_core::sim::{run_many, run_many_seq, Scenario, SizeDist};
use vsa_core::types::PS_PER_US;

/// Sixteen short seeded runs over a mix of pipelines.
fn batch() -> Vec<Scenario> {
    let specs = ["l2_switch", "firewall", "router", "int"];
    (0..16)
        .map(|i| {
            let mut s = Scenario::balanced(specs[i % 4], 8, 8, 90.0, SizeDist::Imix, 20 * PS_PER_US).unwrap();
            s.seed = i as u64;
            s
        })
        .collect()
}

fn sweep(c: &mut Criterion) {
    let mut group = c.benchmark_group("sweep");
    group.sample_size(10).measurement_time(Duration::from_secs(10));
    group.bench_function("sequential", |b| b.iter(|| run_many_seq(batch())));
    group.bench_function("parallel", |b| b.iter(|| run_many(batch())));
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
