//! One album's full loss: the initial stage, then `n_iter` iterative stages
//! in which the previous story pass's last hidden states seed a new topic.
//!
//! Per stage: `com = α·rl + (1−α)·mle`, `L_stage = λ·com + (1−λ)·topic`
//! (λ1 for the initial stage, λ2 for iterative ones), and overall
//! `L = β·L_init + (1−β)·Σ L_iter_n`, with β taken as 1 when `n_iter = 0`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Album, TokenId, Vocabulary, MAX_SENTENCE_LEN, MAX_TITLE_LEN};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::metrics::Reward;
use crate::model::{
    decode_story, decode_substory, decode_topic, encode_album, init_state, joint_contexts, CoattentionScope, StoryMode,
    SubstoryMode, TopicInput, TopicMode, VisualContext,
};
use crate::params::ModelParams;
use crate::tensor::Tensor;

use super::config::TrainConfig;

/// `weight·rl + (1−weight)·mle`.
pub fn combine(mle: f64, rl: f64, weight: f64) -> Result<f64> {
    check_weight("weight", weight)?;
    Ok(weight * rl + (1.0 - weight) * mle)
}

fn check_weight(name: &str, w: f64) -> Result<()> {
    if (0.0..=1.0).contains(&w) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must lie in [0, 1], got {w}")))
    }
}

/// Weights that shape the loss of one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub n_iter: usize,
    pub scope: CoattentionScope,
}

impl LossWeights {
    pub fn from_config(cfg: &TrainConfig, alpha: f64) -> Self {
        LossWeights {
            alpha,
            lambda1: cfg.lambda1,
            lambda2: cfg.lambda2,
            beta: cfg.beta,
            n_iter: cfg.n_iter,
            scope: cfg.scope,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_weight("alpha", self.alpha)?;
        check_weight("lambda1", self.lambda1)?;
        check_weight("lambda2", self.lambda2)?;
        check_weight("beta", self.beta)
    }

    pub fn effective_beta(&self) -> f64 {
        if self.n_iter == 0 {
            1.0
        } else {
            self.beta
        }
    }
}

/// Losses of one stage (initial or one iteration).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageLosses {
    pub topic_mle: f64,
    pub story_mle: f64,
    /// `policy + baseline`; 0 when the RL branch is off.
    pub story_rl: f64,
    pub policy: f64,
    pub baseline: f64,
    pub story_com: f64,
    pub total: f64,
    pub mean_reward: f64,
    /// Target tokens in the teacher-forced story pass.
    pub story_tokens: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub init: StageLosses,
    pub iters: Vec<StageLosses>,
    pub iter_total: f64,
    pub grand_total: f64,
}

impl LossBreakdown {
    /// Recomputes every combined value from its leaves.
    pub fn recompute(&self, w: &LossWeights) -> Result<LossBreakdown> {
        let stage = |s: &StageLosses, lambda: f64| -> Result<StageLosses> {
            let com = if w.alpha > 0.0 { combine(s.story_mle, s.story_rl, w.alpha)? } else { s.story_mle };
            Ok(StageLosses {
                story_com: com,
                total: combine(s.topic_mle, com, lambda)?,
                ..s.clone()
            })
        };
        let init = stage(&self.init, w.lambda1)?;
        let iters = self.iters.iter().map(|s| stage(s, w.lambda2)).collect::<Result<Vec<_>>>()?;
        let iter_total = iters.iter().map(|s| s.total).reduce(|a, b| a + b).unwrap_or(0.0);
        let grand_total = if iters.is_empty() { init.total } else { combine(iter_total, init.total, w.beta)? };
        Ok(LossBreakdown {
            init,
            iters,
            iter_total,
            grand_total,
        })
    }

    pub fn stages(&self) -> impl Iterator<Item = &StageLosses> {
        std::iter::once(&self.init).chain(&self.iters)
    }
}

/// Token-level targets for one album.
#[derive(Clone, Debug)]
pub struct AlbumExample {
    pub id: String,
    pub features: Vec<Vec<f64>>,
    /// Title ids ending in EOS.
    pub title: Vec<TokenId>,
    /// Sentence ids, each ending in EOS.
    pub sentences: Vec<Vec<TokenId>>,
}

impl AlbumExample {
    pub fn new(album: &Album, story_vocab: &Vocabulary, topic_vocab: &Vocabulary) -> Self {
        AlbumExample {
            id: album.id.clone(),
            features: album.features.clone(),
            title: topic_vocab.encode_target(&album.title, MAX_TITLE_LEN),
            sentences: album
                .sentences
                .iter()
                .map(|s| story_vocab.encode_target(s, MAX_SENTENCE_LEN))
                .collect(),
        }
    }

    /// Sentence `i` without EOS, as reward-comparable tokens.
    fn reward_reference(&self, i: usize) -> Vec<String> {
        reward_tokens(&self.sentences[i])
    }
}

/// Content ids rendered as strings; vocabulary ids are one-to-one with words.
pub fn reward_tokens(ids: &[TokenId]) -> Vec<String> {
    ids.iter()
        .filter(|&&t| !Vocabulary::is_special(t))
        .map(|t| t.to_string())
        .collect()
}

/// `baseline.w · x + baseline.b`, a scalar reward predictor.
pub struct RlBaseline;

impl RlBaseline {
    pub fn predict(g: &mut Graph, params: &ModelParams, x: Var) -> Result<Var> {
        crate::model::linear(g, params, "baseline.w", Some("baseline.b"), x)
    }
}

/// REINFORCE terms for one sampled sequence: `advantage · nll` (the advantage
/// is a constant) and the baseline regression `(reward − b)²`.
pub fn reinforce_terms(g: &mut Graph, seq_nll: Var, advantage: f64, reward: f64, baseline: Var) -> Result<(Var, Var)> {
    let policy = g.scale(seq_nll, advantage);
    let r = g.scalar_const(reward);
    let diff = g.sub(r, baseline)?;
    let sq = g.mul(diff, diff)?;
    Ok((policy, sq))
}

/// One RL sample with every quantity the loss treats as a constant.
#[derive(Clone, Debug, PartialEq)]
pub struct RlSample {
    pub tokens: Vec<TokenId>,
    pub reward: f64,
    pub advantage: f64,
    pub baseline_input: Vec<f64>,
}

/// Samples per stage (initial first), one per image.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RlPlan {
    pub stages: Vec<Vec<RlSample>>,
}

pub enum RlMode<'a> {
    /// Draw fresh samples from this seed and record them.
    Sample(u64),
    /// Replay recorded samples; the loss is then a plain function of the parameters.
    Fixed(&'a RlPlan),
}

enum RlState<'a> {
    Sampling(Box<ChaCha8Rng>, RlPlan),
    Fixed(&'a RlPlan),
}

pub struct ForwardOutput {
    pub loss: Var,
    pub breakdown: LossBreakdown,
    /// Samples used by the RL branch; `None` when `alpha = 0`.
    pub plan: Option<RlPlan>,
    /// Teacher-forced story hidden states of the last stage.
    pub last_hidden: Vec<Var>,
}

struct StageVars {
    total: Var,
    losses: StageLosses,
    last_hidden: Vec<Var>,
}

#[allow(clippy::too_many_arguments)]
fn stage(
    g: &mut Graph,
    params: &ModelParams,
    ex: &AlbumExample,
    vis: &VisualContext,
    input: TopicInput<'_>,
    lambda: f64,
    w: &LossWeights,
    reward: &Reward,
    rl: &mut Option<RlState<'_>>,
    index: usize,
) -> Result<StageVars> {
    let s0 = init_state(g, params, input)?;
    let mem = decode_topic(g, params, s0, TopicMode::TeacherForced(&ex.title))?;
    let topic = mem.loss.expect("teacher-forced topic has a loss");
    let joint = joint_contexts(g, params, vis, &mem, w.scope)?;
    let tf = decode_story(g, params, &joint, StoryMode::TeacherForced(&ex.sentences))?;
    let mle = tf.mle_loss.expect("teacher-forced story has a loss");
    let mut losses = StageLosses {
        topic_mle: g.scalar(topic),
        story_mle: g.scalar(mle),
        story_tokens: ex.sentences.iter().map(Vec::len).sum(),
        ..Default::default()
    };

    let com = match rl.as_mut() {
        None => mle,
        Some(state) => {
            let mut policies = Vec::with_capacity(joint.rows.len());
            let mut baselines = Vec::with_capacity(joint.rows.len());
            let mut recorded = Vec::with_capacity(joint.rows.len());
            for (i, &j) in joint.rows.iter().enumerate() {
                let sample = match state {
                    RlState::Fixed(plan) => plan
                        .stages
                        .get(index)
                        .and_then(|s| s.get(i))
                        .cloned()
                        .ok_or_else(|| Error::invalid(format!("RL plan has no sample for stage {index}, image {i}")))?,
                    RlState::Sampling(rng, _) => {
                        let mut scratch = Graph::new(g.precision());
                        let jc = scratch.constant(g.value(j).clone());
                        let sub = decode_substory(&mut scratch, params, jc, SubstoryMode::Sample(rng))?;
                        let r = reward.score(&reward_tokens(&sub.tokens), &ex.reward_reference(i));
                        if !r.is_finite() {
                            return Err(Error::Album {
                                album: ex.id.clone(),
                                message: "reward is not finite".into(),
                            });
                        }
                        RlSample {
                            tokens: sub.tokens,
                            reward: r,
                            advantage: f64::NAN,
                            baseline_input: g.data(j).to_vec(),
                        }
                    }
                };
                let x = g.constant(Tensor::vector(sample.baseline_input.clone()));
                let b = RlBaseline::predict(g, params, x)?;
                let advantage = match state {
                    RlState::Fixed(_) => sample.advantage,
                    RlState::Sampling(..) => sample.reward - g.scalar(b),
                };
                let scored = decode_substory(g, params, j, SubstoryMode::TeacherForced(&sample.tokens))?;
                let nll = scored.loss.expect("teacher-forced sub-story has a loss");
                let (p, bl) = reinforce_terms(g, nll, advantage, sample.reward, b)?;
                policies.push(p);
                baselines.push(bl);
                recorded.push(RlSample { advantage, ..sample });
            }
            let policy = g.add_all(&policies)?;
            let baseline = g.add_all(&baselines)?;
            let rl_loss = g.add(policy, baseline)?;
            losses.policy = g.scalar(policy);
            losses.baseline = g.scalar(baseline);
            losses.story_rl = g.scalar(rl_loss);
            losses.mean_reward = recorded.iter().map(|s| s.reward).sum::<f64>() / recorded.len() as f64;
            if let RlState::Sampling(_, plan) = state {
                plan.stages.push(recorded);
            }
            g.mix(w.alpha, rl_loss, mle)?
        }
    };
    let total = g.mix(lambda, com, topic)?;
    losses.story_com = g.scalar(com);
    losses.total = g.scalar(total);
    Ok(StageVars {
        total,
        losses,
        last_hidden: tf.last_hidden,
    })
}

fn rl_state<'a>(w: &LossWeights, mode: RlMode<'a>) -> Option<RlState<'a>> {
    if w.alpha == 0.0 {
        return None;
    }
    Some(match mode {
        RlMode::Sample(seed) => RlState::Sampling(Box::new(ChaCha8Rng::seed_from_u64(seed)), RlPlan::default()),
        RlMode::Fixed(plan) => RlState::Fixed(plan),
    })
}

fn finish(rl: Option<RlState<'_>>) -> Option<RlPlan> {
    match rl {
        Some(RlState::Sampling(_, plan)) => Some(plan),
        Some(RlState::Fixed(plan)) => Some(plan.clone()),
        None => None,
    }
}

/// The full loss for one album.
pub fn forward_pass(
    g: &mut Graph,
    params: &ModelParams,
    ex: &AlbumExample,
    w: &LossWeights,
    reward: &Reward,
    mode: RlMode<'_>,
) -> Result<ForwardOutput> {
    w.validate()?;
    let mut rl = rl_state(w, mode);
    let vis = encode_album(g, params, &ex.features)?;
    let init = stage(g, params, ex, &vis, TopicInput::Initial(&vis), w.lambda1, w, reward, &mut rl, 0)?;
    let mut breakdown = LossBreakdown {
        init: init.losses,
        ..Default::default()
    };
    let mut last_hidden = init.last_hidden;
    let mut iter_totals = Vec::with_capacity(w.n_iter);
    for n in 1..=w.n_iter {
        let s = stage(g, params, ex, &vis, TopicInput::Iterative(&last_hidden), w.lambda2, w, reward, &mut rl, n)?;
        breakdown.iters.push(s.losses);
        iter_totals.push(s.total);
        last_hidden = s.last_hidden;
    }
    let loss = if iter_totals.is_empty() {
        init.total
    } else {
        let iter_total = g.add_all(&iter_totals)?;
        breakdown.iter_total = g.scalar(iter_total);
        g.mix(w.beta, init.total, iter_total)?
    };
    breakdown.grand_total = g.scalar(loss);
    Ok(ForwardOutput {
        loss,
        breakdown,
        plan: finish(rl),
        last_hidden,
    })
}

/// The model without iterative updating: the initial stage alone.
pub fn forward_without_iu(
    g: &mut Graph,
    params: &ModelParams,
    ex: &AlbumExample,
    w: &LossWeights,
    reward: &Reward,
    mode: RlMode<'_>,
) -> Result<ForwardOutput> {
    w.validate()?;
    let mut rl = rl_state(w, mode);
    let vis = encode_album(g, params, &ex.features)?;
    let init = stage(g, params, ex, &vis, TopicInput::Initial(&vis), w.lambda1, w, reward, &mut rl, 0)?;
    let grand_total = init.losses.total;
    Ok(ForwardOutput {
        loss: init.total,
        breakdown: LossBreakdown {
            init: init.losses,
            iters: Vec::new(),
            iter_total: 0.0,
            grand_total,
        },
        plan: finish(rl),
        last_hidden: init.last_hidden,
    })
}

/// Teacher-forced loss of the initial topic generator alone.
pub fn topic_pretrain_loss(g: &mut Graph, params: &ModelParams, ex: &AlbumExample) -> Result<Var> {
    let vis = encode_album(g, params, &ex.features)?;
    let s0 = init_state(g, params, TopicInput::Initial(&vis))?;
    let mem = decode_topic(g, params, s0, TopicMode::TeacherForced(&ex.title))?;
    Ok(mem.loss.expect("teacher-forced topic has a loss"))
}
