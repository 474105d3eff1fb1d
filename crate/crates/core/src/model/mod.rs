//! The two generation agents and the layers they are built from.
//!
//! All parameters live in one [`ModelParams`] under fixed name prefixes:
//! `venc.*` (visual encoder), `topic.*` (topic generator, shared by the
//! initial and iterative versions), `coatt.*` (co-attention), `story.*`
//! (story decoder, shared across images and iterations) and `baseline.*`
//! (reward baseline).

mod coattention;
mod encoder;
mod gru;
mod story;
mod topic;

pub use coattention::{coattend, joint_contexts, CoAttention, CoattentionScope, JointContext};
pub use encoder::{encode_album, VisualContext};
pub use gru::{gru_cell, init_gru};
pub use story::{beam_search, decode_story, decode_substory, BeamHypothesis, StoryMode, StoryOutput, SubStory, SubstoryMode};
pub use topic::{decode_topic, init_state, TopicInput, TopicMemory, TopicMode};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::{glorot, ModelParams};
use crate::tensor::Tensor;

/// Sizes that fix every parameter shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelDims {
    pub hidden: usize,
    pub feature_dim: usize,
    pub images_per_album: usize,
    pub story_vocab: usize,
    pub topic_vocab: usize,
}

impl ModelDims {
    /// Recovers the dimensions from parameter shapes.
    pub fn infer(params: &ModelParams) -> Result<Self> {
        let shape = |name: &str| {
            params
                .get(name)
                .map(|t| t.shape().to_vec())
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))
        };
        let wf = shape("venc.w_f")?;
        let bridge = shape("topic.bridge_init.w")?;
        let hidden = wf[0];
        Ok(ModelDims {
            hidden,
            feature_dim: wf[1],
            images_per_album: bridge[1] / hidden,
            story_vocab: shape("story.out.w")?[0],
            topic_vocab: shape("topic.out.w")?[0],
        })
    }
}

/// Glorot-uniform matrices and zero biases, deterministic in `seed`. The
/// reward baseline starts at exactly 0.
pub fn init_params(dims: &ModelDims, seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = dims.hidden;
    let n = dims.images_per_album;
    let mut p = ModelParams::new();
    let mats: [(&str, usize, usize); 14] = [
        ("venc.w_cat", h, 2 * h),
        ("venc.w_f", h, dims.feature_dim),
        ("topic.bridge_init.w", h, n * h),
        ("topic.bridge_iter.w", h, n * h),
        ("topic.embed", dims.topic_vocab, h),
        ("topic.out.w", dims.topic_vocab, h),
        ("coatt.w_b", h, h),
        ("coatt.w_v", h, h),
        ("coatt.w_t", h, h),
        ("coatt.w_hv", 1, h),
        ("coatt.w_ht", 1, h),
        ("coatt.w_fc", h, 2 * h),
        ("story.init", h, h),
        ("story.embed", dims.story_vocab, h),
    ];
    for (name, r, c) in mats {
        p.insert(name, glorot(r, c, &mut rng));
    }
    p.insert("story.out.w", glorot(dims.story_vocab, h, &mut rng));
    p.insert("baseline.w", Tensor::zeros(&[1, h]));
    for (name, len) in [
        ("topic.bridge_init.b", h),
        ("topic.bridge_iter.b", h),
        ("topic.out.b", dims.topic_vocab),
        ("story.out.b", dims.story_vocab),
        ("baseline.b", 1),
    ] {
        p.insert(name, Tensor::zeros(&[len]));
    }
    init_gru(&mut p, "venc.fwd", dims.feature_dim, h, &mut rng);
    init_gru(&mut p, "venc.bwd", dims.feature_dim, h, &mut rng);
    init_gru(&mut p, "topic.gru", h, h, &mut rng);
    init_gru(&mut p, "story.gru", 2 * h, h, &mut rng);
    p
}

/// `w·x (+ b)` for a rank-1 `x`.
pub fn linear(g: &mut Graph, params: &ModelParams, w: &str, b: Option<&str>, x: Var) -> Result<Var> {
    let wv = g.param(params, w);
    let y = g.matmul(wv, x)?;
    match b {
        Some(b) => {
            let bv = g.param(params, b);
            g.add(y, bv)
        }
        None => Ok(y),
    }
}

/// Draws an index with probability proportional to `probs`.
pub(crate) fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        if u < p {
            return i;
        }
        u -= p;
        last = i;
    }
    last
}
