use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use kcm_core::blocks::{estimate_block_probs, BlockModel, BlockSpec};
use kcm_core::bootstrap::{closure, closure_naive, estimate_qc};
use kcm_core::kcm::{simulate_kcm, Control, KcmParams};
use kcm_core::percolation::{estimate_crossing_failure, find_clusters};
use kcm_core::rng::random_configuration;
use kcm_core::spectral::build_generator;
use kcm_core::{Geometry, Outside, UpdateFamily};

fn bench_closure(c: &mut Criterion) {
    let fam = UpdateFamily::fa_kf(2, 2).unwrap();
    let mut group = c.benchmark_group("closure");
    for n in [64usize, 256] {
        let g = Arc::new(Geometry::torus(&[n, n]).unwrap());
        let cfg = random_configuration(g, 0.08, 3);
        group.bench_with_input(BenchmarkId::new("queue", n), &cfg, |b, cfg| b.iter(|| closure(black_box(cfg), &fam)));
    }
    let g = Arc::new(Geometry::torus(&[64, 64]).unwrap());
    let cfg = random_configuration(g, 0.08, 3);
    group.bench_function("naive/64", |b| b.iter(|| closure_naive(black_box(&cfg), &fam, Outside::Occupied)));
    group.finish();
}

fn bench_qc(c: &mut Criterion) {
    let fam = UpdateFamily::fa_kf(2, 2).unwrap();
    c.bench_function("qc/fa2 n=32 R=64", |b| b.iter(|| estimate_qc(32, &fam, 1e-3, 64, black_box(5)).unwrap()));
}

fn bench_kcm(c: &mut Criterion) {
    let mut group = c.benchmark_group("kcm");
    for (name, fam, dims) in [
        ("fa1f 1d", UpdateFamily::fa_kf(1, 1).unwrap(), vec![1024]),
        ("fa2 2d", UpdateFamily::fa_kf(2, 2).unwrap(), vec![32, 32]),
    ] {
        let g = Arc::new(Geometry::torus(&dims).unwrap());
        let params = KcmParams::new(fam, 0.3, g.clone(), 10.0, 1).unwrap();
        let init = random_configuration(g, 0.3, 2);
        group.bench_function(name, |b| {
            b.iter(|| simulate_kcm(&params, black_box(&init), 0, false, |_, _| Control::Continue).unwrap())
        });
    }
    group.finish();
}

fn bench_gap(c: &mut Criterion) {
    let fam = UpdateFamily::east(1).unwrap();
    let g = Geometry::free(&[12]).unwrap();
    c.bench_function("gap/east n=12", |b| b.iter(|| build_generator(&g, &fam, 0.3).unwrap().gap().unwrap()));
}

fn bench_blocks_and_crossings(c: &mut Criterion) {
    let spec = BlockSpec::with_dims(BlockModel::Gg, vec![24, 8], 0.3).unwrap();
    c.bench_function("blocks/gg 24x8 R=256", |b| b.iter(|| estimate_block_probs(&spec, 256, black_box(1)).unwrap()));
    let g = Arc::new(Geometry::free(&[256, 256]).unwrap());
    let cfg = random_configuration(g, 0.6, 4);
    c.bench_function("clusters/256", |b| b.iter(|| find_clusters(black_box(&cfg))));
    c.bench_function("crossings/n<=5 R=64", |b| b.iter(|| estimate_crossing_failure(5, 0.2, 64, black_box(2)).unwrap()));
}

criterion_group!(benches, bench_closure, bench_qc, bench_kcm, bench_gap, bench_blocks_and_crossings);
criterion_main!(benches);
