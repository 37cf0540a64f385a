use criterion::{criterion_group, criterion_main, Criterion};
use num_complex::Complex64;
use std::hint::black_box;

use resolab_core::bessel::{bessel_k, FNuParams};
use resolab_core::carleman;
use resolab_core::opnorm::{opnorm_power_iter, DenseOp};
use resolab_core::parametrix::KernelTables;
use resolab_core::torus::{helmholtz_apply, lp_norm_oversampled, GridField, TorusGrid};

fn bench_fourier(c: &mut Criterion) {
    let grid = TorusGrid::new(3, 48).unwrap();
    let u = GridField::random_smooth(grid, 1, 3.0);
    c.bench_function("fft_roundtrip_48cubed", |b| {
        b.iter(|| {
            let spec = black_box(&u).fourier_forward();
            black_box(spec.fourier_inverse())
        })
    });
    c.bench_function("helmholtz_apply_48cubed", |b| {
        b.iter(|| helmholtz_apply(black_box(&u), Complex64::new(5.0, 1.0)).unwrap())
    });
}

fn bench_norms(c: &mut Criterion) {
    let grid = TorusGrid::new(3, 48).unwrap();
    let u = GridField::random_smooth(grid, 2, 3.0);
    c.bench_function("l6_norm_oversampled_48cubed", |b| {
        b.iter(|| lp_norm_oversampled(black_box(&u), 6.0, 2))
    });
}

fn bench_bessel(c: &mut Criterion) {
    c.bench_function("bessel_k_complex", |b| {
        b.iter(|| bessel_k(0.5, black_box(Complex64::new(2.0, 1.5)), 1e-11).unwrap())
    });
    let params = FNuParams::new(3, 0).unwrap();
    c.bench_function("kernel_table_700_nodes", |b| {
        b.iter(|| {
            KernelTables::build(3, 2, Complex64::new(9.0, 4.0), 1e-3, 2.0, 700).unwrap()
        })
    });
    let _ = params;
}

fn bench_opnorm(c: &mut Criterion) {
    let a = DenseOp::random(16, 16, 3);
    c.bench_function("power_iter_dense_16", |b| {
        b.iter(|| opnorm_power_iter(black_box(&a), 1.2, 6.0, 2, 100, 7).unwrap())
    });
}

fn bench_carleman(c: &mut Criterion) {
    let grid = TorusGrid::anisotropic(vec![1024, 8, 8]).unwrap();
    let u = carleman::bump_field(&grid, 2.2, 0, &[0, 0]);
    c.bench_function("carleman_ratio_1024", |b| {
        b.iter(|| carleman::carleman_ratio(black_box(&u), 16.0).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = bench_fourier, bench_norms, bench_bessel, bench_opnorm, bench_carleman
}
criterion_main!(benches);
