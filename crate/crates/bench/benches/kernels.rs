use std::hint::black_box;

use concentra_core::deform::ftransform::f_transform_eval;
use concentra_core::gstats::exact_profile;
use concentra_core::ou::pt_eval;
use concentra_core::smallball::{splitting_of, SplittingConfig};
use concentra_core::{Functional, FunctionalSet, McConfig, NormSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn point(n: usize, seed: u64) -> Vec<f64> {
    // Cheap deterministic filler; the kernels only care about the shape.
    (0..n).map(|i| (((i as u64 + 1) * 2654435761 ^ seed) % 2000) as f64 / 500.0 - 2.0).collect()
}

fn norm_eval(c: &mut Criterion) {
    let mut g = c.benchmark_group("norm_value_grad");
    for n in [64usize, 1024] {
        let x = point(n, 1);
        let mut grad = vec![0.0; n];
        for (name, spec) in [("sup", NormSpec::sup(n).unwrap()), ("l3", NormSpec::lp(n, 3.0).unwrap())] {
            g.bench_with_input(BenchmarkId::new(name, n), &x, |b, x| {
                b.iter(|| spec.value_grad(black_box(x), &mut grad))
            });
        }
    }
    g.finish();
}

fn f_transform(c: &mut Criterion) {
    let mut g = c.benchmark_group("f_transform");
    for m in [4usize, 16] {
        let vectors: Vec<Vec<f64>> = (0..m).map(|i| point(m, i as u64 + 7)).collect();
        let fs = FunctionalSet::new(vectors, true).unwrap();
        let y = point(m, 99);
        g.bench_with_input(BenchmarkId::from_parameter(m), &y, |b, y| {
            b.iter(|| f_transform_eval(&fs, 1.0, black_box(y)).unwrap())
        });
    }
    g.finish();
}

fn mehler(c: &mut Criterion) {
    let spec = NormSpec::sup(64).unwrap();
    let x = point(64, 3);
    let cfg = McConfig::new(4096, 5);
    c.bench_function("pt_eval_sup64_4096", |b| b.iter(|| pt_eval(&spec, 0.5, black_box(&x), &cfg).unwrap()));
}

fn exact_sup_profile(c: &mut Criterion) {
    let spec = NormSpec::sup(4096).unwrap();
    c.bench_function("exact_profile_sup4096", |b| b.iter(|| exact_profile(black_box(&spec))));
}

fn splitting(c: &mut Criterion) {
    let spec = NormSpec::sup(16).unwrap();
    let cfg = SplittingConfig { seed: 11, ..Default::default() };
    let mut g = c.benchmark_group("splitting");
    g.sample_size(10);
    g.bench_function("sup16_delta0.5", |b| b.iter(|| splitting_of(&spec, black_box(0.5 * 2.0), &cfg).unwrap()));
    g.finish();
}

criterion_group!(benches, norm_eval, f_transform, mehler, exact_sup_profile, splitting);
criterion_main!(benches);
