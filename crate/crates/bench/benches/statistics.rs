use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};

use sfv_core::audit::plan_rla;
use sfv_core::stats::{collision_band, detection_probability, CollisionModel};

fn detection(c: &mut Criterion) {
    let mut group = c.benchmark_group("detection_probability");
    for v in [1_000u64, 100_000, 10_000_000] {
        group.bench_with_input(BenchmarkId::from_parameter(v), &v, |b, &v| {
            b.iter(|| detection_probability(black_box(v), 0.02, v / 50))
        });
    }
    group.finish();
}

fn bands_and_plans(c: &mut Criterion) {
    let model = CollisionModel::new(1e7, 1e12).unwrap();
    c.bench_function("collision_band", |b| b.iter(|| collision_band(black_box(&model), 3.0)));
    c.bench_function("plan_rla_1000_batches", |b| {
        b.iter(|| plan_rla(black_box(0.01), 1000, 0.05, 1).unwrap())
    });
}

criterion_group!(benches, detection, bands_and_plans);
criterion_main!(benches);
