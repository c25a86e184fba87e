use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use nalgebra::DMatrix;
use wdam::linalg::sym_eig;
use wdam::rng::seeded;
use wdam::sampling::{sample_commuting_family, sample_noncommuting_bank};
use wdam::{bures_w2_squared, dam_step, MemoryBank, SphereConfig, SymMatrix};

fn eigen(c: &mut Criterion) {
    let g = DMatrix::from_fn(25, 25, |i, j| ((i * 31 + j * 17) % 13) as f64 - 6.0);
    let m = SymMatrix::symmetrize(&g * g.transpose()).unwrap();
    c.bench_function("sym_eig 25x25", |b| b.iter(|| sym_eig(black_box(&m))));
}

fn distance(c: &mut Criterion) {
    let bank = sample_noncommuting_bank(10, 2, 20f64.sqrt(), &mut seeded(1)).unwrap();
    c.bench_function("bures w2 d=10", |b| {
        b.iter(|| bures_w2_squared(black_box(&bank[0]), black_box(&bank[1])).unwrap())
    });
}

fn steps(c: &mut Criterion) {
    let family = sample_commuting_family(&SphereConfig::centered(25, 5000, 1.0, 1.1, 2), &mut seeded(2)).unwrap();
    let spectral = MemoryBank::from_family(family, 1.0).unwrap();
    let q = spectral.pattern(17).unwrap();
    c.bench_function("phi step spectral N=5000 d=25", |b| {
        b.iter(|| dam_step(black_box(&spectral), black_box(&q)).unwrap())
    });

    let patterns = sample_noncommuting_bank(10, 1000, 20f64.sqrt(), &mut seeded(3)).unwrap();
    let q = patterns[3].clone();
    let dense = MemoryBank::new(patterns, 1.0).unwrap();
    let mut group = c.benchmark_group("dense");
    group.sample_size(10);
    group.bench_function("phi step dense N=1000 d=10", |b| {
        b.iter(|| dam_step(black_box(&dense), black_box(&q)).unwrap())
    });
    group.finish();
}

criterion_group!(benches, eigen, distance, steps);
criterion_main!(benches);
