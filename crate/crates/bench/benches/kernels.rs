use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dephaselab_core::fock::{self, Branch, DiscretizationScheme, TruncatedFockSpace};
use dephaselab_core::rmt::{self, EnsembleKind, LevelEnsemble, PairSelection};
use dephaselab_core::specfun::{self, CutoffShape, FormFactor};

fn decoherence_quadrature(c: &mut Criterion) {
    let ff = FormFactor::new(-0.5, 0.3, 1.0, CutoffShape::Exponential).unwrap();
    c.bench_function("gamma_t quadrature, exp cutoff, t=100", |b| {
        b.iter(|| specfun::decoherence_exponent(black_box(&ff), black_box(100.0), 1e-8).unwrap())
    });
}

fn fock_block_eig(c: &mut Criterion) {
    let ff = FormFactor::hard(0.0, 0.5, 1.0).unwrap();
    let bath = fock::discretize(&ff, 2, DiscretizationScheme::MidpointUniform).unwrap();
    let space = TruncatedFockSpace::new(bath, 16).unwrap();
    let block = fock::build_block(&space, Branch::Plus).unwrap();
    c.bench_function("fock block eig, K=2, n_max=16", |b| {
        b.iter(|| black_box(&block).eig().unwrap())
    });
}

fn spectral_estimator(c: &mut Criterion) {
    let ens = LevelEnsemble::new(EnsembleKind::GoeMatrix, 200, 1.0).unwrap();
    let levels = rmt::sample_levels(&ens, 7, 0).unwrap();
    let q = rmt::sample_coupling(200, 7, 0);
    let grid = dephaselab_core::quad::linspace(0.0, 2.0, 401);
    c.bench_function("spectral estimate, one GOE realization, M=200", |b| {
        b.iter(|| {
            rmt::realization_curve(&levels, &q, black_box(&grid), 0.05, PairSelection::All).unwrap()
        })
    });
}

criterion_group!(
    benches,
    decoherence_quadrature,
    fock_block_eig,
    spectral_estimator
);
criterion_main!(benches);
