use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use sfv_core::ledger::{build_format_a, build_format_b, parse_flat, serialize_flat, Hierarchy};
use sfv_core::verification::{count_collisions, detect_semi_collisions, verify_cluster_manual};
use sfv_core::{simulate, ElectionConfig, Layout, SigningMode};

fn config(voters: u32, signing: SigningMode) -> ElectionConfig {
    let mut layout = Layout::uniform(3, 10, voters / 10);
    layout.precincts_per_cluster = Some(5);
    let mut cfg = ElectionConfig::from_layout(&layout, 17).unwrap();
    cfg.pseudonym_width = 8;
    cfg.signing = signing;
    cfg
}

fn simulate_election(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate");
    group.sample_size(10);
    for voters in [1_000u32, 10_000] {
        group.throughput(Throughput::Elements(u64::from(voters)));
        for (name, signing) in [("deferred", SigningMode::Deferred), ("eager", SigningMode::Eager)] {
            let cfg = config(voters, signing);
            group.bench_with_input(BenchmarkId::new(name, voters), &cfg, |b, cfg| {
                b.iter(|| simulate(cfg.clone()).unwrap())
            });
        }
    }
    group.finish();
}

fn ledgers(c: &mut Criterion) {
    let out = simulate(config(10_000, SigningMode::Deferred)).unwrap();
    let (n, width) = (out.num_candidates(), out.config.pseudonym_width);
    let hierarchy = Hierarchy::from_config(&out.config);
    let flat = build_format_a(&out.records, width, n);
    let text = serialize_flat(&flat);
    let tree = build_format_b(&out.records, &hierarchy, width, n).unwrap();

    let mut group = c.benchmark_group("ledger");
    group.throughput(Throughput::Elements(out.records.len() as u64));
    group.bench_function("build_flat", |b| b.iter(|| build_format_a(black_box(&out.records), width, n)));
    group.bench_function("build_hierarchical", |b| {
        b.iter(|| build_format_b(black_box(&out.records), &hierarchy, width, n).unwrap())
    });
    group.bench_function("serialize_flat", |b| b.iter(|| serialize_flat(black_box(&flat))));
    group.bench_function("parse_flat", |b| b.iter(|| parse_flat(black_box(&text)).unwrap()));
    group.bench_function("collision_census", |b| b.iter(|| count_collisions(black_box(&flat))));
    group.bench_function("semi_collisions", |b| b.iter(|| detect_semi_collisions(black_box(&flat), 6).unwrap()));
    group.bench_function("manual_cluster_check", |b| {
        b.iter(|| tree.clusters.iter().map(verify_cluster_manual).filter(|r| r.pass).count())
    });
    group.finish();
}

criterion_group!(benches, simulate_election, ledgers);
criterion_main!(benches);
