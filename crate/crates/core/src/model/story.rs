//! Sub-story decoder: `s_0 = tanh(W_init j_i)`,
//! `s_t = GRU(s_{t−1}, [emb(w_{t−1}); j_i])`, `p(w_t) = softmax(W_out s_t + b)`.
//!
//! One set of `story.*` weights serves every image and every iteration.

use std::cmp::Ordering;

use rand_chacha::ChaCha8Rng;

use crate::data::{TokenId, BOS, EOS, MAX_SENTENCE_LEN};
use crate::error::{Error, Result};
use crate::graph::{log_softmax_slice, Graph, Var};
use crate::params::ModelParams;

use super::coattention::JointContext;
use super::gru::gru_cell;
use super::{linear, sample_index};

pub enum StoryMode<'a> {
    /// One target per image, each ending in EOS.
    TeacherForced(&'a [Vec<TokenId>]),
    Greedy,
    Sample(&'a mut ChaCha8Rng),
    Beam(usize),
}

/// One decoded sentence.
#[derive(Clone, Debug)]
pub struct SubStory {
    /// Emitted ids, including the final EOS when one was produced.
    pub tokens: Vec<TokenId>,
    /// Log-probability of each emitted id.
    pub logprobs: Vec<f64>,
    pub last_hidden: Var,
    /// Summed cross-entropy; teacher-forced mode only.
    pub loss: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct StoryOutput {
    pub sub_stories: Vec<Vec<TokenId>>,
    /// `s_iter`, one final hidden state per image.
    pub last_hidden: Vec<Var>,
    pub step_logprobs: Vec<Vec<f64>>,
    /// Per-image summed cross-entropy; teacher-forced mode only.
    pub substory_losses: Vec<Var>,
    /// Sum of `substory_losses`.
    pub mle_loss: Option<Var>,
}

#[derive(Clone, Debug)]
pub struct BeamHypothesis {
    pub tokens: Vec<TokenId>,
    pub logprob: f64,
    pub hidden: Var,
    pub finished: bool,
}

fn initial_state(g: &mut Graph, params: &ModelParams, j: Var) -> Result<Var> {
    let s = linear(g, params, "story.init", None, j)?;
    Ok(g.tanh(s))
}

/// Returns the new hidden state and the output logits.
fn step(g: &mut Graph, params: &ModelParams, prev: TokenId, j: Var, s: Var) -> Result<(Var, Var)> {
    let embed = g.param(params, "story.embed");
    let e = g.row(embed, prev)?;
    let x = g.concat(&[e, j], 0)?;
    let s = gru_cell(g, params, "story.gru", x, s)?;
    let logits = linear(g, params, "story.out.w", Some("story.out.b"), s)?;
    Ok((s, logits))
}

pub enum SubstoryMode<'a> {
    TeacherForced(&'a [TokenId]),
    Greedy,
    Sample(&'a mut ChaCha8Rng),
}

/// Decodes one sentence from `j`; free-running modes stop at EOS or the
/// maximum sentence length.
pub fn decode_substory(g: &mut Graph, params: &ModelParams, j: Var, mut mode: SubstoryMode<'_>) -> Result<SubStory> {
    let steps = match mode {
        SubstoryMode::TeacherForced(target) => {
            if target.is_empty() {
                return Err(Error::invalid("teacher-forced story target is empty"));
            }
            target.len()
        }
        _ => MAX_SENTENCE_LEN,
    };
    let mut s = initial_state(g, params, j)?;
    let mut prev = BOS;
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    let mut losses = Vec::new();
    for t in 0..steps {
        let (next, logits) = step(g, params, prev, j, s)?;
        s = next;
        let tok = match &mut mode {
            SubstoryMode::TeacherForced(target) => {
                let ce = g.cross_entropy(logits, target[t])?;
                logprobs.push(-g.scalar(ce));
                losses.push(ce);
                target[t]
            }
            SubstoryMode::Greedy => {
                let logp = log_softmax_slice(g.data(logits));
                let tok = argmax(&logp);
                logprobs.push(logp[tok]);
                tok
            }
            SubstoryMode::Sample(rng) => {
                let logp = log_softmax_slice(g.data(logits));
                let probs: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
                let tok = sample_index(&probs, rng);
                logprobs.push(logp[tok]);
                tok
            }
        };
        tokens.push(tok);
        if tok == EOS && !matches!(mode, SubstoryMode::TeacherForced(_)) {
            break;
        }
        prev = tok;
    }
    let loss = if losses.is_empty() { None } else { Some(g.add_all(&losses)?) };
    Ok(SubStory {
        tokens,
        logprobs,
        last_hidden: s,
        loss,
    })
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Higher score first, then shorter, then lexicographically smaller ids.
fn rank(a: &BeamHypothesis, b: &BeamHypothesis) -> Ordering {
    b.logprob
        .total_cmp(&a.logprob)
        .then_with(|| a.tokens.len().cmp(&b.tokens.len()))
        .then_with(|| a.tokens.cmp(&b.tokens))
}

/// Beam search over summed log-probabilities without length normalisation.
/// Finished hypotheses stay in the pool unchanged.
pub fn beam_search(g: &mut Graph, params: &ModelParams, j: Var, beam_size: usize, max_len: usize) -> Result<BeamHypothesis> {
    if beam_size == 0 || max_len == 0 {
        return Err(Error::invalid("beam size and maximum length must be at least 1"));
    }
    let s0 = initial_state(g, params, j)?;
    let mut beam = vec![BeamHypothesis {
        tokens: Vec::new(),
        logprob: 0.0,
        hidden: s0,
        finished: false,
    }];
    while beam.iter().any(|h| !h.finished) {
        let mut pool = Vec::new();
        for hyp in beam {
            if hyp.finished {
                pool.push(hyp);
                continue;
            }
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let (s, logits) = step(g, params, prev, j, hyp.hidden)?;
            let logp = log_softmax_slice(g.data(logits));
            let mut children: Vec<BeamHypothesis> = logp
                .iter()
                .enumerate()
                .map(|(tok, &lp)| {
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(tok);
                    let finished = tok == EOS || tokens.len() >= max_len;
                    BeamHypothesis {
                        tokens,
                        logprob: hyp.logprob + lp,
                        hidden: s,
                        finished,
                    }
                })
                .collect();
            // Siblings share length, so their global order is their local order.
            children.sort_by(rank);
            children.truncate(beam_size);
            pool.extend(children);
        }
        pool.sort_by(rank);
        pool.truncate(beam_size);
        beam = pool;
    }
    Ok(beam.into_iter().next().expect("beam is never empty"))
}

/// Decodes every image's sentence with shared weights.
pub fn decode_story(g: &mut Graph, params: &ModelParams, joint: &JointContext, mut mode: StoryMode<'_>) -> Result<StoryOutput> {
    let n = joint.rows.len();
    if let StoryMode::TeacherForced(targets) = mode {
        if targets.len() != n {
            return Err(Error::invalid(format!("{} story targets for {n} images", targets.len())));
        }
    }
    let mut out = StoryOutput {
        sub_stories: Vec::with_capacity(n),
        last_hidden: Vec::with_capacity(n),
        step_logprobs: Vec::with_capacity(n),
        substory_losses: Vec::new(),
        mle_loss: None,
    };
    for (i, &j) in joint.rows.iter().enumerate() {
        let sub = match &mut mode {
            StoryMode::TeacherForced(targets) => decode_substory(g, params, j, SubstoryMode::TeacherForced(&targets[i]))?,
            StoryMode::Greedy => decode_substory(g, params, j, SubstoryMode::Greedy)?,
            StoryMode::Sample(rng) => decode_substory(g, params, j, SubstoryMode::Sample(rng))?,
            StoryMode::Beam(k) => {
                let best = beam_search(g, params, j, *k, MAX_SENTENCE_LEN)?;
                SubStory {
                    tokens: best.tokens,
                    logprobs: Vec::new(),
                    last_hidden: best.hidden,
                    loss: None,
                }
            }
        };
        out.sub_stories.push(sub.tokens);
        out.last_hidden.push(sub.last_hidden);
        out.step_logprobs.push(sub.logprobs);
        out.substory_losses.extend(sub.loss);
    }
    if !out.substory_losses.is_empty() {
        out.mle_loss = Some(g.add_all(&out.substory_losses)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckOptions};
    use crate::model::{init_params, ModelDims};
    use crate::tensor::{Precision, Tensor};
    use rand::{Rng, SeedableRng};
    use std::collections::HashMap;

    const H: usize = 4;

    fn params(vocab: usize, seed: u64) -> ModelParams {
        let dims = ModelDims {
            hidden: H,
            feature_dim: 2,
            images_per_album: 2,
            story_vocab: vocab,
            topic_vocab: 5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
        let mut p = ModelParams::new();
        for (n, t) in init_params(&dims, seed).iter().filter(|(n, _)| n.starts_with("story.")) {
            p.insert(n, t.clone());
        }
        // Sharper output layer than glorot so sequences differ in probability.
        let w: Vec<f64> = (0..vocab * H).map(|_| rng.random_range(-2.0..2.0)).collect();
        p.insert("story.out.w", Tensor::matrix(vocab, H, w).unwrap());
        let b: Vec<f64> = (0..vocab).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.insert("story.out.b", Tensor::vector(b));
        p
    }

    fn context(g: &mut Graph, seed: u64) -> Var {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        g.vector((0..H).map(|_| rng.random_range(-1.0..1.0)).collect())
    }

    #[test]
    fn greedy_is_deterministic_and_sampling_is_seeded() {
        let p = params(6, 1);
        let run = |seed: Option<u64>| {
            let mut g = Graph::new(Precision::Verify);
            let j = context(&mut g, 2);
            match seed {
                None => decode_substory(&mut g, &p, j, SubstoryMode::Greedy).unwrap().tokens,
                Some(s) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(s);
                    decode_substory(&mut g, &p, j, SubstoryMode::Sample(&mut rng)).unwrap().tokens
                }
            }
        };
        assert_eq!(run(None), run(None));
        assert_eq!(run(Some(5)), run(Some(5)));
    }

    #[test]
    fn uniform_output_layer_gives_t_log_v() {
        let mut p = params(6, 1);
        p.insert("story.out.w", Tensor::zeros(&[6, H]));
        p.insert("story.out.b", Tensor::zeros(&[6]));
        let mut g = Graph::new(Precision::Verify);
        let j = context(&mut g, 2);
        let target = [4, 5, 3, EOS];
        let sub = decode_substory(&mut g, &p, j, SubstoryMode::TeacherForced(&target)).unwrap();
        assert!((g.scalar(sub.loss.unwrap()) - 4.0 * 6f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn teacher_forced_logprobs_sum_to_minus_loss() {
        let p = params(7, 3);
        let mut g = Graph::new(Precision::Verify);
        let j = context(&mut g, 4);
        let target = [5, 6, 4, 3, EOS];
        let sub = decode_substory(&mut g, &p, j, SubstoryMode::TeacherForced(&target)).unwrap();
        let total: f64 = sub.logprobs.iter().sum();
        assert_eq!(total, -g.scalar(sub.loss.unwrap()));
        assert!(decode_substory(&mut g, &p, j, SubstoryMode::TeacherForced(&[])).is_err());
    }

    #[test]
    fn free_running_ends_with_eos_or_max_length() {
        for seed in 0..5 {
            let p = params(5, seed);
            let mut g = Graph::new(Precision::Verify);
            let j = context(&mut g, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sub = decode_substory(&mut g, &p, j, SubstoryMode::Sample(&mut rng)).unwrap();
            assert!(sub.tokens.last() == Some(&EOS) || sub.tokens.len() == MAX_SENTENCE_LEN);
            assert_eq!(sub.tokens.len(), sub.logprobs.len());
        }
    }

    #[test]
    fn beam_one_equals_greedy() {
        for seed in 0..20 {
            let p = params(6, seed);
            let mut g = Graph::new(Precision::Verify);
            let j = context(&mut g, seed + 50);
            let greedy = decode_substory(&mut g, &p, j, SubstoryMode::Greedy).unwrap();
            let beam = beam_search(&mut g, &p, j, 1, MAX_SENTENCE_LEN).unwrap();
            assert_eq!(beam.tokens, greedy.tokens);
            assert_eq!(g.data(beam.hidden), g.data(greedy.last_hidden));
        }
    }

    /// Sequence log-probabilities of every complete sequence up to `max_len`.
    fn enumerate(p: &ModelParams, j: &[f64], max_len: usize) -> Vec<(Vec<TokenId>, f64)> {
        let mut g = Graph::new(Precision::Verify);
        let jv = g.vector(j.to_vec());
        let s0 = initial_state(&mut g, p, jv).unwrap();
        let mut out = Vec::new();
        let mut stack = vec![(Vec::<TokenId>::new(), 0.0, s0)];
        while let Some((toks, lp, s)) = stack.pop() {
            let prev = toks.last().copied().unwrap_or(BOS);
            let (s2, logits) = step(&mut g, p, prev, jv, s).unwrap();
            let logp = log_softmax_slice(g.data(logits));
            for (tok, &l) in logp.iter().enumerate() {
                let mut t = toks.clone();
                t.push(tok);
                if tok == EOS || t.len() == max_len {
                    out.push((t, lp + l));
                } else {
                    stack.push((t, lp + l, s2));
                }
            }
        }
        out
    }

    #[test]
    fn wide_beam_matches_exhaustive_search() {
        let (vocab, max_len) = (4, 3);
        for seed in 0..10 {
            let p = params(vocab, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let j: Vec<f64> = (0..H).map(|_| rng.random_range(-1.0..1.0)).collect();
            let all = enumerate(&p, &j, max_len);
            let best = all
                .iter()
                .min_by(|a, b| b.1.total_cmp(&a.1).then(a.0.len().cmp(&b.0.len())).then(a.0.cmp(&b.0)))
                .unwrap();
            let mut g = Graph::new(Precision::Verify);
            let jv = g.vector(j);
            let beam = beam_search(&mut g, &p, jv, vocab.pow(max_len as u32), max_len).unwrap();
            assert_eq!(&beam.tokens, &best.0);
            assert!((beam.logprob - best.1).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_frequencies_match_logprobs() {
        let p = params(3, 4);
        let j = [0.3, -0.6, 0.9, 0.1];
        let exact: HashMap<Vec<TokenId>, f64> = enumerate(&p, &j, 3).into_iter().map(|(t, l)| (t, l.exp())).collect();
        let n = 50_000;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut counts: HashMap<Vec<TokenId>, usize> = HashMap::new();
        let mut g = Graph::new(Precision::Verify);
        let jv = g.vector(j.to_vec());
        let base = g.len();
        for _ in 0..n {
            let sub = decode_substory(&mut g, &p, jv, SubstoryMode::Sample(&mut rng)).unwrap();
            let mut toks = sub.tokens;
            toks.truncate(3);
            let lp: f64 = sub.logprobs[..toks.len()].iter().sum();
            let e = exact[&toks];
            assert!((lp.exp() - e).abs() < 1e-12);
            *counts.entry(toks).or_default() += 1;
            g.truncate(base);
        }
        // P(|Z| > z) <= exp(-z²/2); Bonferroni over all outcomes at family-wise rate 1e-3.
        let z = (2.0 * (exact.len() as f64 / 1e-3).ln()).sqrt();
        for (seq, &prob) in &exact {
            let freq = counts.get(seq).copied().unwrap_or(0) as f64 / n as f64;
            let sigma = (prob * (1.0 - prob) / n as f64).sqrt();
            assert!((freq - prob).abs() <= z * sigma + 1e-12, "{seq:?}: {freq} vs {prob}");
        }
    }

    #[test]
    fn story_shapes_and_shared_weights() {
        let p = params(6, 2);
        let mut g = Graph::new(Precision::Verify);
        let rows: Vec<Var> = (0..5).map(|i| context(&mut g, i)).collect();
        let joint = JointContext {
            rows,
            attn_v: vec![],
            attn_t: vec![],
        };
        let out = decode_story(&mut g, &p, &joint, StoryMode::Greedy).unwrap();
        assert_eq!(out.sub_stories.len(), 5);
        assert_eq!(out.last_hidden.len(), 5);
        assert!(g.bound_params().all(|n| n.starts_with("story.")));

        let same = JointContext {
            rows: vec![joint.rows[0]; 3],
            attn_v: vec![],
            attn_t: vec![],
        };
        let out = decode_story(&mut g, &p, &same, StoryMode::Beam(3)).unwrap();
        assert!(out.sub_stories.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let p = params(6, 7);
        let targets = vec![vec![4, 5, EOS], vec![3, EOS]];
        let loss = |p: &ModelParams| {
            let mut g = Graph::new(Precision::Verify);
            let rows = vec![context(&mut g, 1), context(&mut g, 2)];
            let joint = JointContext {
                rows,
                attn_v: vec![],
                attn_t: vec![],
            };
            let out = decode_story(&mut g, p, &joint, StoryMode::TeacherForced(&targets))?;
            let l = out.mle_loss.unwrap();
            g.backward(l)?;
            Ok((g.scalar(l), g.param_grads()))
        };
        let report = grad_check(&p, loss, &GradCheckOptions::default()).unwrap();
        assert!(report.passed(), "{report}");
    }
}
