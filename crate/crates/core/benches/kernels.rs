//! Data-parallel kernels on the default rayon pool against a one-thread pool.
//! Both variants run the same code path; only the pool differs.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rayon::ThreadPool;
use resonance_lab::aniso::{band_project, BoxGrid, DyadicIndex, GridFn};
use resonance_lab::bounds::{exponent_samples, q_variational, sample_points};
use resonance_lab::map_model::{builtin_perturbed_cat, Polarization, Sign, SplittingField};
use resonance_lab::periodic_orbits::{periodic_points, NewtonOptions};

fn pools() -> [(&'static str, ThreadPool); 2] {
    let n = rayon::current_num_threads();
    [
        ("parallel", rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap()),
        ("sequential", rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap()),
    ]
}

fn bench_exponents(c: &mut Criterion) {
    let sys = builtin_perturbed_cat(0.01, 0).unwrap();
    let split = SplittingField::default();
    let pts = sample_points(&sys, 2000, 1);
    let mut g = c.benchmark_group("exponent_samples");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, pts.len()), |b| {
            b.iter(|| pool.install(|| exponent_samples(&sys, &split, black_box(&pts), 8).unwrap()))
        });
    }
    g.finish();
}

fn bench_q_variational(c: &mut Criterion) {
    let sys = builtin_perturbed_cat(0.01, 0).unwrap();
    let sets: Vec<_> = (1..=8).map(|m| periodic_points(&sys, m, &NewtonOptions::default()).unwrap()).collect();
    let mut g = c.benchmark_group("q_variational");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, sets.len()), |b| {
            b.iter(|| pool.install(|| q_variational(&sys, 1.0, -1.0, black_box(&sets)).unwrap()))
        });
    }
    g.finish();
}

fn bench_band_project(c: &mut Criterion) {
    let theta = Polarization::standard().unwrap();
    let grid = BoxGrid::new(4.0, 256);
    let u = GridFn::sample_real(grid, |x| (-4.0 * (x[0] * x[0] + x[1] * x[1])).exp());
    let band = DyadicIndex::new(3, Sign::Plus);
    let mut g = c.benchmark_group("band_project");
    for (name, pool) in pools() {
        g.bench_function(BenchmarkId::new(name, grid.n), |b| {
            b.iter(|| pool.install(|| band_project(black_box(&u), &theta, band).unwrap()))
        });
    }
    g.finish();
}

criterion_group! {
    name = kernels;
    config = Criterion::default().sample_size(10);
    targets = bench_exponents, bench_q_variational, bench_band_project
}
criterion_main!(kernels);
