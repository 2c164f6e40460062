use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use geoq_bench::{labels, positive_matrix};
use geoq_core::fusion::{compute_geometry, fuse, FusionParams};
use geoq_core::medoid::{fit_class_medoids, medoid_index};
use geoq_core::quantum::{compact_swap_test, Shots};

fn swap_test(c: &mut Criterion) {
    let mut group = c.benchmark_group("compact_swap_test");
    for dim in [2usize, 8, 32] {
        let m = positive_matrix(2, dim, 1);
        let (x, y) = (m.row(0).to_vec(), m.row(1).to_vec());
        group.bench_with_input(BenchmarkId::new("exact", dim), &dim, |b, _| {
            b.iter(|| compact_swap_test(black_box(&x), black_box(&y), Shots::Exact).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("shots_1e4", dim), &dim, |b, _| {
            let shots = Shots::Sampled { shots: 10_000, seed: 3 };
            b.iter(|| compact_swap_test(black_box(&x), black_box(&y), shots).unwrap())
        });
    }
    group.finish();
}

fn medoid(c: &mut Criterion) {
    let mut group = c.benchmark_group("medoid_index");
    for n in [100usize, 400] {
        let pts = positive_matrix(n, 3, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| medoid_index(black_box(pts.view()), usize::MAX, 0).unwrap())
        });
    }
    group.finish();
}

fn fusion(c: &mut Criterion) {
    let f = positive_matrix(1000, 3, 4);
    let y = labels(1000, 3);
    let medoids = fit_class_medoids(f.view(), &y, 3, 200, 0).unwrap();
    c.bench_function("compute_geometry_1000x3", |b| {
        b.iter(|| compute_geometry(black_box(f.view()), &medoids, Shots::Exact).unwrap())
    });
    let geometry = compute_geometry(f.view(), &medoids, Shots::Exact).unwrap();
    let params = FusionParams {
        alpha: 0.6,
        ..FusionParams::default()
    };
    c.bench_function("fuse_1000x3", |b| {
        b.iter(|| fuse(black_box(&geometry), &params).unwrap())
    });
}

criterion_group!(benches, swap_test, medoid, fusion);
criterion_main!(benches);
