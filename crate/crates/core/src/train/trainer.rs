//! Staged training: topic-only MLE, joint MLE, then joint fine-tuning with
//! the RL branch on. Each stage starts a fresh Adam state from the previous
//! stage's final parameters. After every epoch the validation split is
//! decoded greedily and scored with story-level METEOR-lite.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{Album, Corpus, TokenId, Vocabulary};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::{meteor_corpus, MeteorAggregation, Reward};
use crate::model::{init_params, ModelDims};
use crate::optim::Adam;
use crate::params::{Gradients, ModelParams};

use super::config::TrainConfig;
use super::forward::{forward_pass, topic_pretrain_loss, AlbumExample, LossWeights, RlMode};
use super::infer::{generate, GenerateOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Topic = 1,
    Joint = 2,
    FineTune = 3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub stage: Stage,
    /// Epoch counter over the whole run, from 1.
    pub epoch: usize,
    pub stage_epoch: usize,
    pub loss: f64,
    pub topic_mle: f64,
    /// Story MLE per target token, averaged over stages.
    pub story_mle_per_token: f64,
    pub story_rl: f64,
    pub mean_reward: f64,
    /// Mean pre-clip gradient norm.
    pub grad_norm: f64,
    pub val_meteor: Option<f64>,
}

/// Parameters and validation score at the end of one stage.
#[derive(Clone, Debug)]
pub struct StageEnd {
    pub stage: Stage,
    pub val_meteor: Option<f64>,
    pub params: ModelParams,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Highest validation METEOR-lite; the final parameters when there is no validation split.
    pub best: ModelParams,
    pub best_val: Option<f64>,
    pub last: ModelParams,
    pub history: Vec<EpochRecord>,
    pub stage_ends: Vec<StageEnd>,
}

pub fn model_dims(corpus: &Corpus, hidden: usize) -> Result<ModelDims> {
    let first = corpus
        .train
        .first()
        .ok_or_else(|| Error::invalid("training split is empty"))?;
    Ok(ModelDims {
        hidden,
        feature_dim: corpus.feature_dim,
        images_per_album: first.len(),
        story_vocab: corpus.story_vocab.len(),
        topic_vocab: corpus.topic_vocab.len(),
    })
}

fn mix_seed(parts: &[u64]) -> u64 {
    // SplitMix64 over the parts.
    let mut x = 0x9e37_79b9_7f4a_7c15u64;
    for &p in parts {
        x ^= p.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(x << 6).wrapping_add(x >> 2);
        let mut z = x;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x = z ^ (z >> 31);
    }
    x
}

/// Settings for one run of epochs.
#[derive(Clone, Copy, Debug)]
pub struct StageSpec {
    pub stage: Stage,
    pub lr: f64,
    pub alpha: f64,
    pub clip_norm: f64,
}

impl StageSpec {
    pub fn for_stage(stage: Stage, cfg: &TrainConfig) -> Self {
        match stage {
            Stage::Topic => StageSpec {
                stage,
                lr: cfg.lr_warm,
                alpha: 0.0,
                clip_norm: 0.0,
            },
            Stage::Joint => StageSpec {
                stage,
                lr: cfg.lr_warm,
                alpha: cfg.alpha_warm,
                clip_norm: 0.0,
            },
            Stage::FineTune => StageSpec {
                stage,
                lr: cfg.lr_ft,
                alpha: cfg.alpha_ft,
                clip_norm: cfg.clip_norm,
            },
        }
    }
}

#[derive(Default)]
struct AlbumStats {
    loss: f64,
    topic: f64,
    story_mle: f64,
    story_tokens: usize,
    story_rl: f64,
    reward: f64,
    stages: usize,
}

fn album_gradients(
    params: &ModelParams,
    ex: &AlbumExample,
    cfg: &TrainConfig,
    spec: &StageSpec,
    reward: &Reward,
    seed: u64,
) -> Result<(Gradients, AlbumStats)> {
    let mut g = Graph::new(cfg.precision);
    let mut stats = AlbumStats::default();
    let loss = match spec.stage {
        Stage::Topic => {
            let l = topic_pretrain_loss(&mut g, params, ex)?;
            stats.topic = g.scalar(l);
            l
        }
        _ => {
            let w = LossWeights::from_config(cfg, spec.alpha);
            let out = forward_pass(&mut g, params, ex, &w, reward, RlMode::Sample(seed))?;
            let b = &out.breakdown;
            stats.topic = b.init.topic_mle;
            for s in b.stages() {
                stats.story_mle += s.story_mle;
                stats.story_tokens += s.story_tokens;
                stats.story_rl += s.story_rl;
                stats.reward += s.mean_reward;
                stats.stages += 1;
            }
            out.loss
        }
    };
    stats.loss = g.scalar(loss);
    if !stats.loss.is_finite() {
        return Err(Error::NonFinite(format!("loss of album {}", ex.id)));
    }
    g.backward(loss)?;
    Ok((g.param_grads(), stats))
}

/// One pass over `examples` in a seeded order; returns the epoch record
/// without a validation score.
#[allow(clippy::too_many_arguments)]
pub fn run_epoch(
    params: &mut ModelParams,
    adam: &mut Adam,
    examples: &[AlbumExample],
    cfg: &TrainConfig,
    spec: &StageSpec,
    reward: &Reward,
    epoch: usize,
    stage_epoch: usize,
) -> Result<EpochRecord> {
    let diverged = |message: String| Error::Diverged {
        stage: spec.stage as usize,
        epoch,
        message,
    };
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, spec.stage as u64, epoch as u64])));
    let mut totals = AlbumStats::default();
    let mut grad_norm_sum = 0.0;
    let mut batches = 0usize;
    for batch in order.chunks(cfg.batch) {
        let snapshot: &ModelParams = params;
        let results: Vec<Result<(Gradients, AlbumStats)>> = batch
            .par_iter()
            .map(|&i| {
                let seed = mix_seed(&[cfg.seed, spec.stage as u64, epoch as u64, i as u64]);
                album_gradients(snapshot, &examples[i], cfg, spec, reward, seed)
            })
            .collect();
        let mut sum = Gradients::default();
        let scale = 1.0 / batch.len() as f64;
        for r in results {
            let (grads, s) = r.map_err(|e| diverged(e.to_string()))?;
            sum.add_scaled(&grads, scale);
            totals.loss += s.loss;
            totals.topic += s.topic;
            totals.story_mle += s.story_mle;
            totals.story_tokens += s.story_tokens;
            totals.story_rl += s.story_rl;
            totals.reward += s.reward;
            totals.stages += s.stages;
        }
        params.accumulate(&sum, 1.0)?;
        let norm = if spec.clip_norm > 0.0 {
            params.clip_grad_norm(spec.clip_norm)
        } else {
            params.grad_norm()
        };
        if !norm.is_finite() {
            return Err(diverged("gradient norm is not finite".into()));
        }
        grad_norm_sum += norm;
        batches += 1;
        adam.step(params, cfg.precision);
        if !params.all_finite() {
            return Err(diverged("parameters became non-finite".into()));
        }
    }
    let n = examples.len().max(1) as f64;
    let per_stage = |x: f64| if totals.stages == 0 { 0.0 } else { x / totals.stages as f64 };
    Ok(EpochRecord {
        stage: spec.stage,
        epoch,
        stage_epoch,
        loss: totals.loss / n,
        topic_mle: totals.topic / n,
        story_mle_per_token: if totals.story_tokens == 0 {
            0.0
        } else {
            totals.story_mle / totals.story_tokens as f64
        },
        story_rl: per_stage(totals.story_rl),
        mean_reward: per_stage(totals.reward),
        grad_norm: grad_norm_sum / batches.max(1) as f64,
        val_meteor: None,
    })
}

/// Generation settings implied by a training configuration.
pub fn generate_options(cfg: &TrainConfig, beam: usize) -> GenerateOptions {
    GenerateOptions {
        n_iter: cfg.n_iter,
        beam,
        scope: cfg.scope,
        precision: cfg.precision,
    }
}

/// Concatenated sub-stories, specials removed.
pub fn story_words(story: &[Vec<TokenId>], vocab: &Vocabulary) -> Vec<String> {
    story.iter().flat_map(|s| vocab.decode(s)).collect()
}

/// Story-level METEOR-lite of greedy decodes against the reference stories.
pub fn validation_meteor(params: &ModelParams, albums: &[Album], vocab: &Vocabulary, opts: &GenerateOptions) -> Result<f64> {
    let hyps = albums
        .par_iter()
        .map(|a| generate(params, &a.features, opts).map(|gen| story_words(&gen.story, vocab)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<Vec<Vec<String>>> = albums.iter().map(|a| vec![a.story_tokens()]).collect();
    meteor_corpus(&hyps, &refs, MeteorAggregation::Sentence)
}

/// Runs every stage with a non-zero epoch count. `on_epoch` sees each record
/// and the parameters after that epoch.
pub fn train(
    corpus: &Corpus,
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &ModelParams),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let dims = model_dims(corpus, cfg.hidden)?;
    let mut params = init_params(&dims, cfg.seed);
    params.round_to(cfg.precision);
    let examples: Vec<AlbumExample> = corpus
        .train
        .iter()
        .map(|a| AlbumExample::new(a, &corpus.story_vocab, &corpus.topic_vocab))
        .collect();
    let refs: Vec<Vec<Vec<String>>> = examples
        .iter()
        .map(|e| e.sentences.iter().map(|s| super::forward::reward_tokens(s)).collect())
        .collect();
    let reward = Reward::new(cfg.reward, &refs)?;
    let val_opts = generate_options(cfg, 1);

    let mut history = Vec::new();
    let mut stage_ends = Vec::new();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut epoch = 0;
    for (stage, epochs) in [
        (Stage::Topic, cfg.epochs_topic),
        (Stage::Joint, cfg.epochs_joint),
        (Stage::FineTune, cfg.epochs_ft),
    ] {
        if epochs == 0 {
            continue;
        }
        let spec = StageSpec::for_stage(stage, cfg);
        let mut adam = Adam::new(spec.lr).with_rate_for("baseline.", cfg.lr_baseline);
        let mut last_val = None;
        for stage_epoch in 1..=epochs {
            epoch += 1;
            let mut rec = run_epoch(&mut params, &mut adam, &examples, cfg, &spec, &reward, epoch, stage_epoch)?;
            if !corpus.val.is_empty() {
                let v = validation_meteor(&params, &corpus.val, &corpus.story_vocab, &val_opts)?;
                rec.val_meteor = Some(v);
                last_val = Some(v);
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, params.clone()));
                }
            }
            log::info!(
                "stage {} epoch {}/{}: loss {:.4} topic {:.4} story/token {:.4} reward {:.4} val {}",
                stage as u8,
                stage_epoch,
                epochs,
                rec.loss,
                rec.topic_mle,
                rec.story_mle_per_token,
                rec.mean_reward,
                rec.val_meteor.map_or("-".into(), |v| format!("{v:.4}"))
            );
            on_epoch(&rec, &params);
            history.push(rec);
        }
        stage_ends.push(StageEnd {
            stage,
            val_meteor: last_val,
            params: params.clone(),
        });
    }
    let (best_val, best) = match best {
        Some((v, p)) => (Some(v), p),
        None => (None, params.clone()),
    };
    Ok(TrainOutcome {
        best,
        best_val,
        last: params,
        history,
        stage_ends,
    })
}

pub const HISTORY_HEADER: &str =
    "epoch,stage,stage_epoch,loss,topic_mle,story_mle_per_token,story_rl,mean_reward,grad_norm,val_meteor_lite";

pub fn history_row(r: &EpochRecord) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},",
        r.epoch, r.stage as u8, r.stage_epoch, r.loss, r.topic_mle, r.story_mle_per_token, r.story_rl, r.mean_reward, r.grad_norm
    );
    if let Some(v) = r.val_meteor {
        let _ = write!(s, "{v:.6}");
    }
    s
}

pub fn history_csv(records: &[EpochRecord]) -> String {
    let mut out = format!("{HISTORY_HEADER}\n");
    for r in records {
        out.push_str(&history_row(r));
        out.push('\n');
    }
    out
}
