use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rpforest::{
    build_forest, build_tree, exact_knn, gen_gaussian, ForestParams, RngStream, TreeParams,
};
use std::hint::black_box;

fn bench_build_tree(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_tree");
    group.sample_size(20);
    for n in [5_000usize, 10_000, 20_000, 40_000] {
        let data = gen_gaussian(n, 20, &[1.0; 20], 1).unwrap();
        let params = TreeParams::new(20, 1);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &data, |b, data| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                black_box(build_tree(data, &params, &mut RngStream::new(seed)).unwrap())
            });
        });
    }
    group.finish();
}

fn bench_ntry(c: &mut Criterion) {
    let mut group = c.benchmark_group("build_tree_ntry");
    group.sample_size(20);
    let data = gen_gaussian(10_000, 20, &[1.0; 20], 2).unwrap();
    for n_try in [1usize, 5, 20] {
        let params = TreeParams::new(20, n_try);
        group.bench_with_input(BenchmarkId::from_parameter(n_try), &params, |b, params| {
            b.iter(|| black_box(build_tree(&data, params, &mut RngStream::new(7)).unwrap()));
        });
    }
    group.finish();
}

fn bench_forest(c: &mut Criterion) {
    let data = gen_gaussian(10_000, 50, &[1.0; 50], 3).unwrap();
    let mut group = c.benchmark_group("forest");
    group.sample_size(10);
    for trees in [10usize, 40] {
        let params = ForestParams::new(trees, TreeParams::new(20, 1), 11);
        group.bench_with_input(BenchmarkId::new("build", trees), &params, |b, params| {
            b.iter(|| black_box(build_forest(&data, params).unwrap()));
        });
        let forest = build_forest(&data, &params).unwrap();
        group.throughput(Throughput::Elements(data.n() as u64));
        group.bench_function(BenchmarkId::new("batch_knn_all", trees), |b| {
            b.iter(|| black_box(forest.batch_knn_all(5).unwrap()));
        });
    }
    group.finish();
}

fn bench_oracle(c: &mut Criterion) {
    let data = gen_gaussian(2_000, 20, &[1.0; 20], 4).unwrap();
    c.bench_function("exact_knn/2000x20", |b| {
        b.iter(|| black_box(exact_knn(&data, 5).unwrap()))
    });
}

criterion_group!(
    benches,
    bench_build_tree,
    bench_ntry,
    bench_forest,
    bench_oracle
);
criterion_main!(benches);
