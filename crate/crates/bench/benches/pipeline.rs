use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, Criterion};
use earshot_core::fewshot::nearest_prototypes;
use earshot_core::nn::{train_supervised, AdamState, TrainConfig};
use earshot_core::{ClassifierHead, EmbedderConfig, EmbedderModel, FeatureExtractor, Segment};

fn chirp(seed: u64) -> Segment {
    let f0 = 300.0 + seed as f64 * 40.0;
    let samples = (0..16_000)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            (0.2 * (2.0 * std::f64::consts::PI * (f0 + 400.0 * t) * t).sin()) as f32
        })
        .collect();
    Segment::new(samples, "bench", 0.0)
}

fn features(c: &mut Criterion) {
    let fx = FeatureExtractor::default();
    let seg = chirp(1);
    c.bench_function("log_mel_cmvn_1s", |b| b.iter(|| fx.extract(black_box(&seg))));
}

fn forward(c: &mut Criterion) {
    let model = EmbedderModel::init(EmbedderConfig::default()).unwrap();
    let patch = FeatureExtractor::default().extract(&chirp(2));
    c.bench_function("embed_forward", |b| b.iter(|| model.forward(black_box(&patch))));
}

fn train_step(c: &mut Criterion) {
    let fx = FeatureExtractor::default();
    let data: Vec<_> = (0..25).map(|i| (fx.extract(&chirp(i)), i as usize % 5)).collect();
    let model = EmbedderModel::init(EmbedderConfig::default()).unwrap();
    let head = ClassifierHead::new(5, 64, 0);
    let cfg = TrainConfig { epochs: 1, batch_size: 25, ..Default::default() };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("full_batch_25", |b| {
        b.iter(|| {
            let (mut m, mut h) = (model.clone(), head.clone());
            train_supervised(&mut m, &mut h, &data, &cfg, &mut AdamState::default()).unwrap()
        })
    });
    group.finish();
}

fn classify(c: &mut Criterion) {
    let protos: Vec<Vec<f32>> = (0..10)
        .map(|i| (0..64).map(|j| ((i * 64 + j) as f32 * 0.37).sin()).collect())
        .collect();
    let query: Vec<f32> = (0..64).map(|j| (j as f32 * 0.11).cos()).collect();
    c.bench_function("nearest_prototypes_10x64", |b| {
        b.iter(|| nearest_prototypes(black_box(&query), black_box(&protos)).unwrap())
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().measurement_time(Duration::from_secs(5));
    targets = features, forward, train_step, classify
}
criterion_main!(benches);
