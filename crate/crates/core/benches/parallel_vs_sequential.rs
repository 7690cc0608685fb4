//! Rayon data-parallel paths against their sequential fallbacks: exact
//! evaluation over clusters and the offline metadata build.
//!
//! `cargo bench -p fedaqp-core` runs both flavors; building with
//! `--no-default-features` makes the default entry points sequential too.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use fedaqp_core::datamodel::{
    evaluate_exact, evaluate_exact_seq, split_into_clusters, Aggregation, ClusterOrder,
    ClusterSet, CountTensor, Dimension, Interval, RangeQuery, Schema, TensorRow,
};
use fedaqp_core::metastore::{build_metadata, build_metadata_seq};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn world(rows: usize) -> ClusterSet {
    let schema = Schema::new(
        vec![
            Dimension::dense("a", 128),
            Dimension::dense("b", 64),
            Dimension::dense("c", 32),
        ],
        "m",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::with_capacity(rows);
    while out.len() < rows {
        let coords = vec![
            rng.random_range(0..128u32),
            rng.random_range(0..64u32),
            rng.random_range(0..32u32),
        ];
        if seen.insert(coords.clone()) {
            out.push(TensorRow {
                coords,
                measure: 1 + rng.random_range(0..4u64),
            });
        }
    }
    let tensor = CountTensor::from_rows(schema, out);
    split_into_clusters(&tensor, 1000, ClusterOrder::Insertion).unwrap()
}

fn bench_evaluation(c: &mut Criterion) {
    let mut group = c.benchmark_group("evaluate_exact");
    for rows in [20_000usize, 100_000] {
        let set = world(rows);
        let query = RangeQuery::new(
            Aggregation::Sum,
            vec![
                ("a".into(), Interval { lo: 10, hi: 100 }),
                ("b".into(), Interval { lo: 5, hi: 50 }),
            ],
        )
        .unwrap()
        .bind(set.schema())
        .unwrap();
        group.bench_with_input(BenchmarkId::new("parallel", rows), &set, |b, set| {
            b.iter(|| evaluate_exact(&query, set.clusters()))
        });
        group.bench_with_input(BenchmarkId::new("sequential", rows), &set, |b, set| {
            b.iter(|| evaluate_exact_seq(&query, set.clusters()))
        });
    }
    group.finish();
}

fn bench_metadata_build(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_metadata");
    group.sample_size(20);
    for rows in [20_000usize, 100_000] {
        let set = world(rows);
        group.bench_with_input(BenchmarkId::new("parallel", rows), &set, |b, set| {
            b.iter(|| build_metadata(set, 10).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", rows), &set, |b, set| {
            b.iter(|| build_metadata_seq(set, 10).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_evaluation, bench_metadata_build);
criterion_main!(benches);
