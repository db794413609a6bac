use std::hint::black_box;

use aae_core::simlab::presets;
use aae_core::{estimate_asymptotics, fit_aae, fit_mnl, AaeOptions, FitOptions, GVariant};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion};

fn mnl(c: &mut Criterion) {
    let w = presets::misaligned();
    let mut group = c.benchmark_group("fit_mnl");
    for m in [1_000, 10_000] {
        let (p, _) = w.sample(m, 0, 1).unwrap();
        let targets = p.human_targets().unwrap();
        group.bench_function(format!("misaligned/{m}"), |b| {
            b.iter(|| fit_mnl(black_box(&targets), &FitOptions::default()).unwrap())
        });
    }
    group.finish();
}

fn aae(c: &mut Criterion) {
    let w = presets::misaligned();
    let (p, a) = w.sample(200, 2_000, 2).unwrap();
    let mut group = c.benchmark_group("fit_aae");
    group.bench_function("parametric/200x2000", |b| {
        b.iter(|| fit_aae(black_box(&p), black_box(&a), GVariant::Parametric, &AaeOptions::default()).unwrap())
    });
    // Adam runs a fixed 2000 epochs, so keep the sample small.
    let (ps, as_) = presets::finite().sample(100, 500, 3).unwrap();
    group.sample_size(10);
    group.bench_function("mlp/100x500", |b| {
        b.iter(|| fit_aae(black_box(&ps), black_box(&as_), GVariant::Mlp, &AaeOptions::default()).unwrap())
    });
    group.finish();
}

fn asymptotics(c: &mut Criterion) {
    let w = presets::misaligned();
    let (p, a) = w.sample(1_000, 10_000, 4).unwrap();
    let fit = fit_aae(&p, &a, GVariant::Parametric, &AaeOptions::default()).unwrap();
    let g = fit.g_model.clone().unwrap();
    c.bench_function("estimate_asymptotics/1000x10000", |b| {
        b.iter_batched(|| fit.beta_hat.clone(), |beta| estimate_asymptotics(&p, &a, &beta, &g).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, mnl, aae, asymptotics);
criterion_main!(benches);
