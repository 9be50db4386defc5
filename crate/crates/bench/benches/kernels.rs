use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use kflow_bench::{sphere, z2_graph};
use kflow_core::flow::{cfl_dt, step};
use kflow_core::geometry::{cotan_mean_curvature, geometry, mixed_areas};
use kflow_core::kahler::{kahler_angle, standard_structure};
use kflow_core::monotonicity::{gaussian_density, DensityConfig, WeightMode};
use kflow_core::Vec4;

fn bench_geometry(c: &mut Criterion) {
    let mut g = c.benchmark_group("geometry");
    for level in [2u32, 3] {
        let m = sphere(level);
        g.bench_with_input(BenchmarkId::new("cotan_h", level), &m, |b, m| {
            b.iter(|| cotan_mean_curvature(m, &mixed_areas(m)))
        });
        g.bench_with_input(BenchmarkId::new("fitted", level), &m, |b, m| {
            b.iter(|| geometry(black_box(m)))
        });
    }
    g.finish();
}

fn bench_step(c: &mut Criterion) {
    let m = sphere(3);
    let dt = cfl_dt(&m, 0.5).unwrap();
    c.bench_function("flow_step_sphere3", |b| {
        b.iter(|| step(black_box(&m), dt).unwrap())
    });
}

fn bench_kahler(c: &mut Criterion) {
    let m = z2_graph(32);
    let geom = geometry(&m);
    let (j, _) = standard_structure();
    c.bench_function("kahler_angle_z2_32", |b| {
        b.iter(|| kahler_angle(black_box(&m), &geom, &j))
    });
}

fn bench_density(c: &mut Criterion) {
    let m = z2_graph(32);
    let cfg = DensityConfig::default();
    let x0 = Vec4::zeros();
    let mut g = c.benchmark_group("density");
    for mode in [WeightMode::Unweighted, WeightMode::InverseCos] {
        g.bench_function(mode.as_str(), |b| {
            b.iter(|| gaussian_density(black_box(&m), -0.1, 0.0, &x0, mode, &cfg).unwrap())
        });
    }
    g.finish();
}

criterion_group!(
    benches,
    bench_geometry,
    bench_step,
    bench_kahler,
    bench_density
);
criterion_main!(benches);
