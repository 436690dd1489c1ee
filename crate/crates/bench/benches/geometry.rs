use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use semiweyl::affine::decompose;
use semiweyl::expr::eval_jet;
use semiweyl::random::seeded_expression;
use semiweyl::tensor::{curvature, levi_civita};
use semiweyl_bench::{centroaffine_sphere, fixture, swmt3};

fn jets(c: &mut Criterion) {
    let e = seeded_expression(7, 3, 6);
    let p = [0.3, -0.2, 0.5];
    let mut group = c.benchmark_group("jet_eval");
    for order in 0..=3 {
        group.bench_with_input(BenchmarkId::from_parameter(order), &order, |b, &order| {
            b.iter(|| eval_jet(black_box(&e), black_box(&p), order).unwrap())
        });
    }
    group.finish();
}

fn tensors(c: &mut Criterion) {
    let s = swmt3();
    let p = [0.3, -0.2, 0.5];
    c.bench_function("levi_civita_3d", |b| b.iter(|| levi_civita(&s.g).eval(black_box(&p), 1).unwrap()));
    c.bench_function("curvature_3d", |b| {
        b.iter(|| curvature(&s.conn.eval(black_box(&p), 1).unwrap(), 3).unwrap())
    });
}

fn affine(c: &mut Criterion) {
    let d = centroaffine_sphere();
    c.bench_function("affine_decompose", |b| b.iter(|| decompose(&d, black_box(&[1.1, 0.4])).unwrap()));
}

fn runs(c: &mut Criterion) {
    let mut group = c.benchmark_group("run_fixture");
    group.sample_size(10);
    for name in ["example_2_3.spec", "sphere_hypersurface.spec", "null_hyperplane.spec", "centroaffine_sphere.spec"] {
        let spec = fixture(name);
        group.bench_function(name, |b| b.iter(|| semiweyl::run(black_box(&spec))));
    }
    group.finish();
}

criterion_group!(benches, jets, tensors, affine, runs);
criterion_main!(benches);
