use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use prau_core::aggregation::{AggregationQuery, AggregationService, NoiseMode};
use prau_core::analytics::{theorem_accuracy, AccuracyParams, QuadratureSettings};
use prau_core::harness::BloomReplica;
use prau_core::model::{BucketKey, Contribution, Origin, ReportId, SealedReport};
use prau_core::SimRng;
use rand::{Rng, SeedableRng};

fn accuracy(c: &mut Criterion) {
    let q = QuadratureSettings::default();
    for (e, u, n) in [(10.0, 1_000_000, 2), (1.0, 1000, 13), (1.0, 100_000, 40)] {
        let p = AccuracyParams::new(e, u, n).unwrap();
        c.bench_function(&format!("theorem_accuracy eps={e} u={u} n={n}"), |b| {
            b.iter(|| theorem_accuracy(black_box(&p), &q).unwrap())
        });
    }
}

fn aggregation(c: &mut Criterion) {
    let mut rng = SimRng::seed_from_u64(3);
    let dest = Origin::new("buyer.example").unwrap();
    let buckets: Vec<BucketKey> = (0..201_000).map(BucketKey).collect();
    let reports: Vec<SealedReport> = (0..10_000)
        .map(|i| {
            let cs = (0..20)
                .map(|_| Contribution::new(BucketKey(rng.random_range(0..201_000)), 3276).unwrap())
                .collect();
            SealedReport::seal(ReportId(i), dest.clone(), cs, 0, 0).unwrap()
        })
        .collect();
    let query = AggregationQuery { reports, buckets, epsilon: 10.0 };
    c.bench_function("aggregate 10k reports over 201k buckets", |b| {
        b.iter(|| {
            let mut service = AggregationService::new(NoiseMode::Laplace);
            service.aggregate(black_box(&query), &mut rng).unwrap()
        })
    });
}

fn bloom(c: &mut Criterion) {
    let replica = BloomReplica::new(100_000, 10_000, 20, 201_000, 1).unwrap();
    let mut group = c.benchmark_group("bloom");
    group.sample_size(10);
    group.bench_function("build replica pool=1e5", |b| {
        b.iter(|| BloomReplica::new(100_000, 10_000, 20, 201_000, black_box(2)).unwrap())
    });
    group.bench_function("score and accuse n=21 k=1e4", |b| {
        b.iter(|| replica.evaluate(black_box(21), 10.0, 10_000, false).unwrap())
    });
    group.finish();
}

criterion_group!(benches, accuracy, aggregation, bloom);
criterion_main!(benches);
