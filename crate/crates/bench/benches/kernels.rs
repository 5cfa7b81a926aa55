use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use detlab_bench::{gaussian_fixture, hybrid_fixture, SIZES};
use detlab_core::detcore::{decompose_rows, logdet_lu, logdet_qr};
use std::hint::black_box;

fn logdet(c: &mut Criterion) {
    let mut group = c.benchmark_group("logdet");
    for n in SIZES {
        let s = gaussian_fixture(n);
        group.bench_with_input(BenchmarkId::new("lu", n), &s, |b, s| b.iter(|| logdet_lu(black_box(&s.entries))));
        group.bench_with_input(BenchmarkId::new("qr", n), &s, |b, s| b.iter(|| logdet_qr(black_box(&s.entries))));
    }
    group.finish();
}

fn decompose(c: &mut Criterion) {
    let mut group = c.benchmark_group("decompose_rows");
    group.sample_size(20);
    for n in SIZES {
        let s = hybrid_fixture(n);
        group.bench_with_input(BenchmarkId::new("plain", n), &s, |b, s| b.iter(|| decompose_rows(black_box(s), false)));
        group.bench_with_input(BenchmarkId::new("diagnostics", n), &s, |b, s| {
            b.iter(|| decompose_rows(black_box(s), true))
        });
    }
    group.finish();
}

criterion_group!(benches, logdet, decompose);
criterion_main!(benches);
