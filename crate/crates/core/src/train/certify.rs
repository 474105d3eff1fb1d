//! Finite-difference certification of the complete loss on a tiny model.

use crate::data::{synth_corpus, SynthConfig};
use crate::error::Result;
use crate::gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
use crate::graph::Graph;
use crate::metrics::Reward;
use crate::model::{init_params, CoattentionScope, ModelDims};
use crate::params::ModelParams;
use crate::tensor::{Precision, Tensor};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::forward::{forward_pass, AlbumExample, LossWeights, RlMode};

/// One synthetic album with `H = 8`, 8-dim features and 3 images.
pub fn tiny_setup(seed: u64) -> Result<(ModelParams, AlbumExample)> {
    let corpus = synth_corpus(&SynthConfig {
        seed,
        n_albums: 1,
        feature_dim: 8,
        images_per_album: 3,
        noise: 0.3,
        val_fraction: 0.0,
        test_fraction: 0.0,
        min_count: 1,
        ..Default::default()
    })?;
    let dims = ModelDims {
        hidden: 8,
        feature_dim: 8,
        images_per_album: 3,
        story_vocab: corpus.story_vocab.len(),
        topic_vocab: corpus.topic_vocab.len(),
    };
    let mut params = init_params(&dims, seed);
    // Non-zero biases exercise every gradient path.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let names: Vec<String> = params.iter().filter(|(_, t)| t.rank() == 1).map(|(n, _)| n.to_string()).collect();
    for name in names {
        let n = params.expect(&name).numel();
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(-0.3..0.3)).collect();
        params.insert(name, Tensor::vector(data));
    }
    let ex = AlbumExample::new(&corpus.train[0], &corpus.story_vocab, &corpus.topic_vocab);
    Ok((params, ex))
}

/// Checks every parameter of the full loss, RL branch included through a frozen plan.
pub fn certify_gradients(n_iter: usize, alpha: f64, seed: u64) -> Result<GradCheckReport> {
    let (params, ex) = tiny_setup(seed)?;
    let w = LossWeights {
        alpha,
        lambda1: 0.7,
        lambda2: 0.7,
        beta: 0.3,
        n_iter,
        scope: CoattentionScope::PerImage,
    };
    let reward = Reward::MeteorLite;
    let plan = {
        let mut g = Graph::new(Precision::Verify);
        forward_pass(&mut g, &params, &ex, &w, &reward, RlMode::Sample(seed))?.plan
    };
    let loss = |p: &ModelParams| {
        let mut g = Graph::new(Precision::Verify);
        let mode = match &plan {
            Some(plan) => RlMode::Fixed(plan),
            None => RlMode::Sample(seed),
        };
        let out = forward_pass(&mut g, p, &ex, &w, &reward, mode)?;
        g.backward(out.loss)?;
        Ok((g.scalar(out.loss), g.param_grads()))
    };
    grad_check(&params, loss, &GradCheckOptions::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_setup_is_small() {
        let (p, ex) = tiny_setup(1).unwrap();
        assert_eq!(p.expect("venc.w_f").shape(), &[8, 8]);
        assert!(p.expect("story.out.w").shape()[0] <= 30);
        assert!(p.expect("topic.out.w").shape()[0] <= 30);
        assert_eq!(ex.sentences.len(), 3);
    }
}
