//! Compares the replicate map in its compiled mode (parallel when the
//! `parallel` feature is on) against the always-sequential baseline, on a
//! calibration-style workload: prior cluster-count simulation per replicate.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use nrmi_mix::calibrate::mc_expected_clusters;
use nrmi_mix::crm::NggParams;
use nrmi_mix::exec::{map_indexed, map_indexed_sequential};

fn replicate_work(i: usize) -> f64 {
    // one prior simulation per call keeps each unit of work nontrivial
    let params = NggParams::nig(1.0).unwrap();
    mc_expected_clusters(params, 50, 4, 1000 + i as u64).unwrap().0
}

fn bench_replicate_map(c: &mut Criterion) {
    let mut group = c.benchmark_group("replicate_map");
    group.sample_size(10);
    for &n in &[8usize, 32] {
        group.bench_with_input(BenchmarkId::new("compiled_mode", n), &n, |b, &n| {
            b.iter(|| map_indexed(n, replicate_work))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, &n| {
            b.iter(|| map_indexed_sequential(n, replicate_work))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_replicate_map);
criterion_main!(benches);
