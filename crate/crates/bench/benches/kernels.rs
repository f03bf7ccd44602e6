use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ris_core::badvamp::{badvamp, bg_denoise, bg_denoise_divergence, column_priors, BadvampConfig, BgPrior};
use ris_core::channel::recondition;
use ris_core::completion::{hard_threshold_rank, niht, CompletionProblem, NihtConfig};
use ris_core::linalg::{c, crandn_matrix, matmul};
use ris_core::phase::optimal_phases;
use ris_core::training::{random_training, sparse_schedule};

fn denoiser(cr: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r: Vec<_> = (0..4096)
        .map(|_| c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
        .collect();
    let prior = BgPrior::new(0.25, 1.0);
    cr.bench_function("bg_denoise 4096", |b| b.iter(|| bg_denoise(black_box(&r), 4.0, &prior).unwrap()));
    cr.bench_function("bg_denoise_divergence 4096", |b| {
        b.iter(|| bg_denoise_divergence(black_box(&r), 4.0, &prior).unwrap())
    });
}

fn products(cr: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let a = crandn_matrix(&mut rng, 32, 32, 1.0);
    let b = crandn_matrix(&mut rng, 32, 250, 1.0);
    cr.bench_function("matmul 32x32x250", |bn| bn.iter(|| matmul(black_box(&a), black_box(&b))));
    cr.bench_function("rank-8 truncation 32x250", |bn| bn.iter(|| hard_threshold_rank(black_box(&b), 8)));
}

fn bilinear(cr: &mut Criterion) {
    let (m, l, n, t, rho) = (32, 32, 32, 250, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = recondition(&crandn_matrix(&mut rng, m, l, 1.0), 10.0).unwrap();
    let g = crandn_matrix(&mut rng, l, n, 1.0);
    let x = random_training(&mut rng, n, t, t as f64).unwrap().x;
    let s = sparse_schedule(&mut rng, l, t, rho).unwrap();
    let gx = &g * &x;
    let y = &h * s.apply(&gx);
    let v: Vec<f64> = (0..t).map(|j| gx.column(j).norm_squared() / l as f64).collect();
    let priors = column_priors(rho, &v);
    let cfg = BadvampConfig {
        restarts: 1,
        ..BadvampConfig::default()
    };
    let mut group = cr.benchmark_group("badvamp");
    group.sample_size(10);
    group.bench_function("single run M=L=32 T=250", |b| {
        b.iter_batched(
            || ChaCha8Rng::seed_from_u64(4),
            |mut r| badvamp(&y, l, &priors, 0.0, &cfg, &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn completion(cr: &mut Criterion) {
    let (l, n, t, r) = (32, 32, 250, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = crandn_matrix(&mut rng, l, r, 1.0) * crandn_matrix(&mut rng, r, n, 1.0);
    let x = random_training(&mut rng, n, t, t as f64).unwrap().x;
    let s = sparse_schedule(&mut rng, l, t, 0.5).unwrap();
    let d = s.apply(&(&g * &x));
    let config = NihtConfig {
        max_iter: 100,
        ..NihtConfig::default()
    };
    let mut group = cr.benchmark_group("niht");
    group.sample_size(20);
    group.bench_function("100 iterations L=32 T=250 r=4", |b| {
        b.iter(|| {
            niht(&CompletionProblem {
                d_check: &d,
                mask: &s.s,
                x_b: &x,
                rank: r,
                config,
            })
            .unwrap()
        })
    });
    group.finish();
}

fn phases(cr: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let g = crandn_matrix(&mut rng, 32, 32, 1.0);
    let h = crandn_matrix(&mut rng, 32, 32, 1.0);
    let z = crandn_matrix(&mut rng, 32, 32, 1.0);
    cr.bench_function("closed-form phases 32x32", |b| b.iter(|| optimal_phases(&g, &h, &z).unwrap()));
}

criterion_group!(benches, denoiser, products, bilinear, completion, phases);
criterion_main!(benches);
