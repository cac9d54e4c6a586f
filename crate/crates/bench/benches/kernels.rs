use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use mpradon::decide::{newton_verdict, NewtonMode, NewtonOptions};
use mpradon::opnorm::{discretize_piece, spectral_norm, POWER_MAX_ITER, POWER_TOL};
use mpradon::surfaces::catalog::catalog_entry;
use mpradon::surfaces::gamma_from_w;
use mpradon::{PolySurface, UniformGrid};
use mpradon_bench::{convolution_piece_inputs, product_kernel};

fn synthesis(c: &mut Criterion) {
    let k = product_kernel(4);
    let grid = UniformGrid::cube(2, -0.6, 0.6, 33);
    c.bench_function("synthesize_partial product(2) bound 4, 33^2", |b| {
        b.iter(|| k.synthesize_partial(black_box(4), &grid).unwrap())
    });
}

fn pieces(c: &mut Criterion) {
    let (surface, bump, scheme, cut, grid) = convolution_piece_inputs(256);
    c.bench_function("discretize_piece translation j=3, 256 points", |b| {
        b.iter(|| discretize_piece(&surface, &bump, &scheme, black_box(&[3.0]), &cut, &grid).unwrap())
    });
    let op = discretize_piece(&surface, &bump, &scheme, &[3.0], &cut, &grid).unwrap();
    c.bench_function("spectral_norm of one piece", |b| {
        b.iter(|| spectral_norm(black_box(&op), POWER_TOL, POWER_MAX_ITER).unwrap())
    });
}

fn flows(c: &mut Criterion) {
    let e = catalog_entry("heisenberg").unwrap();
    c.bench_function("gamma_from_w heisenberg", |b| {
        b.iter(|| gamma_from_w(&e.w, black_box(&[0.3, -0.2]), &[0.1, 0.2, 0.3], 1e-10).unwrap())
    });
}

fn newton(c: &mut Criterion) {
    let p = PolySurface::monomials(&[(6, 0), (0, 6), (2, 2), (3, 1), (1, 4)]).unwrap();
    c.bench_function("newton_verdict product", |b| {
        b.iter(|| newton_verdict(black_box(&p), NewtonMode::Product, NewtonOptions::default()).unwrap())
    });
}

criterion_group!(benches, synthesis, pieces, flows, newton);
criterion_main!(benches);
