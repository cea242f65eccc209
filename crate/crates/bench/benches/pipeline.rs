use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

use seqcoupon::{allocate, predict_item, run_rct, train_pair, PolicyConstraint};
use seqcoupon_bench::Fixture;

fn bench_rct(c: &mut Criterion) {
    let f = Fixture::new(10_000, 1);
    c.bench_function("run_rct/10k", |b| {
        b.iter(|| run_rct(&f.gt, &f.items, &f.set1, &f.set2, &f.probs, black_box(1)).unwrap())
    });
}

fn bench_train(c: &mut Criterion) {
    let f = Fixture::new(5_000, 2);
    let opts = f.options();
    let mut g = c.benchmark_group("train_pair");
    g.sample_size(10);
    g.bench_function("5k", |b| {
        b.iter(|| train_pair(&f.round1, &f.round2, &f.items, &f.set1, &f.set2, &opts).unwrap())
    });
    g.finish();
}

fn bench_item(c: &mut Criterion) {
    let f = Fixture::new(2_000, 3);
    let pair = f.train();
    let constraint = PolicyConstraint::new(0.02, None).unwrap();
    let item = &f.items[0];
    c.bench_function("predict_item", |b| {
        b.iter(|| predict_item(&pair, black_box(item), 2.0).unwrap())
    });
    let preds = predict_item(&pair, item, 2.0).unwrap();
    c.bench_function("allocate/7x7", |b| {
        b.iter_batched(
            || preds.clone(),
            |p| allocate(&p, item, &f.set1, &f.set2, &constraint, 2.0).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, bench_rct, bench_train, bench_item);
criterion_main!(benches);
