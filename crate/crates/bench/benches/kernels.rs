use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use focus_bench::{gemm_inputs, importance, output_tile, TILE};
use focus_core::config::{BlockConfig, SimThreshold};
use focus_core::gemm::{concentrated_gemm_all, dense_gemm_tiled};
use focus_core::sec::top_k_select;
use focus_core::sic::gather_tile;

fn gather(c: &mut Criterion) {
    let mut group = c.benchmark_group("gather_tile");
    for temporal in [0.0, 0.95] {
        let (tile, tags) = output_tile(temporal);
        group.bench_with_input(
            BenchmarkId::from_parameter(temporal),
            &(tile, tags),
            |b, (tile, tags)| {
                b.iter(|| {
                    gather_tile(
                        black_box(tile),
                        tags,
                        &BlockConfig::default(),
                        SimThreshold::Enabled(0.9),
                    )
                    .unwrap()
                })
            },
        );
    }
    group.finish();
}

fn gemm(c: &mut Criterion) {
    let mut group = c.benchmark_group("gemm");
    group.sample_size(20);
    let (x, _, w) = gemm_inputs(0.0);
    group.bench_function("dense", |b| {
        b.iter(|| dense_gemm_tiled(black_box(&x), &w, &TILE).unwrap())
    });
    for temporal in [0.5, 0.95] {
        let (_, conc, w) = gemm_inputs(temporal);
        group.bench_with_input(BenchmarkId::new("concentrated", temporal), &conc, |b, conc| {
            b.iter(|| concentrated_gemm_all(black_box(conc), &w, &TILE).unwrap())
        });
    }
    group.finish();
}

fn top_k(c: &mut Criterion) {
    let mut group = c.benchmark_group("top_k_select");
    for m in [1024, 6272] {
        let s = importance(m);
        group.bench_with_input(BenchmarkId::from_parameter(m), &s, |b, s| {
            b.iter(|| top_k_select(black_box(s), m * 2 / 5).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, gather, gemm, top_k);
criterion_main!(benches);
