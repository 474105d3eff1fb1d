use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use tavst::data::{synth_corpus, Corpus, SynthConfig};
use tavst::metrics::{evaluate, Reward};
use tavst::model::init_params;
use tavst::train::{forward_pass, generate, generate_options, model_dims, AlbumExample, LossWeights, RlMode, TrainConfig};
use tavst::{Graph, ModelParams};

fn setup() -> (Corpus, ModelParams, TrainConfig) {
    let corpus = synth_corpus(&SynthConfig {
        n_albums: 40,
        feature_dim: 64,
        min_count: 1,
        ..Default::default()
    })
    .unwrap();
    let cfg = TrainConfig::desk();
    let dims = model_dims(&corpus, cfg.hidden).unwrap();
    let mut params = init_params(&dims, cfg.seed);
    params.round_to(cfg.precision);
    (corpus, params, cfg)
}

fn training_step(c: &mut Criterion) {
    let (corpus, params, cfg) = setup();
    let ex = AlbumExample::new(&corpus.train[0], &corpus.story_vocab, &corpus.topic_vocab);
    let mut group = c.benchmark_group("forward_backward_one_album");
    for (name, alpha) in [("mle", 0.0), ("mle_rl", 0.8)] {
        let w = LossWeights::from_config(&cfg, alpha);
        group.bench_function(name, |b| {
            b.iter(|| {
                let mut g = Graph::new(cfg.precision);
                let out = forward_pass(&mut g, &params, &ex, &w, &Reward::MeteorLite, RlMode::Sample(1)).unwrap();
                g.backward(out.loss).unwrap();
                black_box(g.param_grads())
            })
        });
    }
    group.finish();
}

fn generation(c: &mut Criterion) {
    let (corpus, params, cfg) = setup();
    let features = &corpus.train[0].features;
    let mut group = c.benchmark_group("generate_one_album");
    for beam in [1, 3, 5] {
        let opts = generate_options(&cfg, beam);
        group.bench_function(format!("beam{beam}"), |b| b.iter(|| black_box(generate(&params, features, &opts).unwrap())));
    }
    group.finish();
}

fn metrics(c: &mut Criterion) {
    let (corpus, _, _) = setup();
    let stories: Vec<Vec<String>> = corpus.train.iter().map(|a| a.story_tokens()).collect();
    let hyps: Vec<Vec<String>> = stories.iter().rev().cloned().collect();
    let refs: Vec<Vec<Vec<String>>> = stories.iter().map(|s| vec![s.clone()]).collect();
    c.bench_function("evaluate_all_metrics_32_stories", |b| b.iter(|| black_box(evaluate(&hyps, &refs).unwrap())));
}

criterion_group!(benches, training_step, generation, metrics);
criterion_main!(benches);
