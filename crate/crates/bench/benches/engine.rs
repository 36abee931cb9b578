use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use encounter_bench::{episode_config, small_world, truth_priors};
use encounter_core::metrics::HotspotScore;
use encounter_core::{match_moments, run_episode, GroundTruth, PortableRng, PosteriorCell};

fn beta_updates(c: &mut Criterion) {
    let mut rng = PortableRng::new(7);
    let bits: Vec<bool> = (0..1024).map(|_| rng.bernoulli(0.3)).collect();
    let cell = PosteriorCell::new(0.3, match_moments(0.3, 0.01).unwrap()).unwrap();
    c.bench_function("update_one x1024", |b| {
        b.iter(|| {
            bits.iter()
                .fold(cell, |c, &d| c.update_one(d))
                .point_estimate()
        })
    });
    c.bench_function("match_moments", |b| {
        b.iter(|| match_moments(black_box(0.25), black_box(0.02)).unwrap())
    });
}

fn scoring(c: &mut Criterion) {
    let mut rng = PortableRng::new(11);
    let pred: Vec<f64> = (0..500).map(|_| rng.uniform()).collect();
    let truth: Vec<f64> = (0..500).map(|_| rng.uniform()).collect();
    c.bench_function("hotspot_score n=500", |b| {
        b.iter(|| HotspotScore::compute(black_box(&pred), black_box(&truth)).unwrap())
    });
}

fn episodes(c: &mut Criterion) {
    let world = small_world(42);
    let priors = truth_priors(&world);
    let mut group = c.benchmark_group("episode");
    group.sample_size(10);
    for jobs in [1, 4] {
        let cfg = episode_config(jobs);
        group.bench_with_input(BenchmarkId::from_parameter(jobs), &cfg, |b, cfg| {
            b.iter(|| {
                run_episode(
                    &world.dataset,
                    &priors,
                    cfg,
                    GroundTruth::Known(&world.truth),
                )
                .unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, beta_updates, scoring, episodes);
criterion_main!(benches);
