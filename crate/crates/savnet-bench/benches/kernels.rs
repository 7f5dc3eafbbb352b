use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use savnet_bench::{bench_dataset, bench_dict, demo_recipe, demo_spec, small_model};
use savnet_core::eval::{attribute_probabilities, nearest_label};
use savnet_core::{
    infer, init_params, render, train, FrontEnd, LossConfig, OptimizerKind, TrainConfig,
};

fn bench_render(c: &mut Criterion) {
    let recipe = demo_recipe();
    c.bench_function("render_1s_clip", |b| {
        b.iter(|| render(black_box(&recipe), black_box(3)).unwrap())
    });
}

fn bench_frontend(c: &mut Criterion) {
    let clip = render(&demo_recipe(), 0).unwrap();
    let front = FrontEnd::new().unwrap();
    c.bench_function("mel_frontend_1s", |b| {
        b.iter(|| front.process(black_box(&clip), "bench").unwrap())
    });
}

fn bench_forward(c: &mut Criterion) {
    let spec = demo_spec();
    let params = init_params(&small_model(), 0).unwrap();
    c.bench_function("model_forward", |b| {
        b.iter(|| infer(black_box(&params), black_box(&spec)).unwrap())
    });
}

fn bench_nearest_label(c: &mut Criterion) {
    let spec = demo_spec();
    let params = init_params(&small_model(), 0).unwrap();
    let inference = infer(&params, &spec).unwrap();
    let probs = attribute_probabilities(&inference.g);
    let candidates = bench_dict().candidates(savnet_core::Task::Seen).unwrap();
    c.bench_function("nearest_label", |b| {
        b.iter(|| nearest_label(black_box(&probs), black_box(&candidates)).unwrap())
    });
}

/// One epoch over 8 clips: forward, backward, and the optimizer step.
fn bench_train_epoch(c: &mut Criterion) {
    let dataset = bench_dataset(8);
    let dict = bench_dict();
    let config = TrainConfig {
        epochs: 1,
        batch_size: 8,
        learning_rate: 1e-3,
        optimizer: OptimizerKind::Adam,
        seed: 0,
        loss: LossConfig::sm_local(),
        model: small_model(),
    };
    let mut group = c.benchmark_group("train");
    group.sample_size(10);
    group.bench_function("epoch_8_clips", |b| {
        b.iter(|| train(black_box(&dataset), &dict, &config, |_, _| {}).unwrap())
    });
    group.finish();
}

criterion_group!(
    kernels,
    bench_render,
    bench_frontend,
    bench_forward,
    bench_nearest_label,
    bench_train_epoch
);
criterion_main!(kernels);
