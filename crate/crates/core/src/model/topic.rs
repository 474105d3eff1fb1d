//! Topic description generator with hidden-state memory.
//!
//! The initial and iterative versions share the embedding, GRU and output
//! layer; each has its own bridge from the flattened payload to the first
//! hidden state.

use rand_chacha::ChaCha8Rng;

use crate::data::{TokenId, BOS, EOS, MAX_TITLE_LEN};
use crate::error::{Error, Result};
use crate::graph::{log_softmax_slice, Graph, Var};
use crate::params::ModelParams;

use super::encoder::VisualContext;
use super::gru::gru_cell;
use super::{linear, sample_index};

#[derive(Clone, Copy, Debug)]
pub enum TopicInput<'a> {
    Initial(&'a VisualContext),
    /// Last hidden states of the previous story pass, one per image.
    Iterative(&'a [Var]),
}

pub enum TopicMode<'a> {
    TeacherForced(&'a [TokenId]),
    Greedy,
    Sample(&'a mut ChaCha8Rng),
}

/// Decoder hidden states, one row per step; `M ≥ 2`.
#[derive(Clone, Debug)]
pub struct TopicMemory {
    pub hidden: Vec<Var>,
    /// `M × H`.
    pub matrix: Var,
    pub tokens: Vec<TokenId>,
    /// Log-distribution over the topic vocabulary at each step.
    pub logprobs: Vec<Vec<f64>>,
    /// Mean cross-entropy over steps; teacher-forced mode only.
    pub loss: Option<Var>,
}

/// `tanh(W_bridge · flatten(payload) + b_bridge)`.
pub fn init_state(g: &mut Graph, params: &ModelParams, input: TopicInput<'_>) -> Result<Var> {
    let (rows, bridge) = match input {
        TopicInput::Initial(v) => (v.rows.as_slice(), "topic.bridge_init"),
        TopicInput::Iterative(s) => (s, "topic.bridge_iter"),
    };
    let w_shape = params.expect(&format!("{bridge}.w")).shape();
    let hidden = w_shape[0];
    if rows.len() * hidden != w_shape[1] {
        return Err(Error::invalid(format!(
            "topic bridge expects {} images, payload has {}",
            w_shape[1] / hidden,
            rows.len()
        )));
    }
    let flat = g.concat(rows, 0)?;
    let y = linear(g, params, &format!("{bridge}.w"), Some(&format!("{bridge}.b")), flat)?;
    Ok(g.tanh(y))
}

/// Decodes from `state0` until EOS or the maximum title length. Free-running
/// modes cannot emit EOS at the first step, so memory always has two rows.
pub fn decode_topic(g: &mut Graph, params: &ModelParams, state0: Var, mut mode: TopicMode<'_>) -> Result<TopicMemory> {
    if let TopicMode::TeacherForced(target) = mode {
        if target.len() < 2 {
            return Err(Error::invalid("teacher-forced topic target needs a token before EOS"));
        }
    }
    let embed = g.param(params, "topic.embed");
    let mut hidden = Vec::new();
    let mut tokens = Vec::new();
    let mut logprobs = Vec::new();
    let mut losses = Vec::new();
    let mut prev = BOS;
    let mut h = state0;
    for t in 0..MAX_TITLE_LEN {
        let x = g.row(embed, prev)?;
        h = gru_cell(g, params, "topic.gru", x, h)?;
        hidden.push(h);
        let logits = linear(g, params, "topic.out.w", Some("topic.out.b"), h)?;
        let logp = log_softmax_slice(g.data(logits));
        let tok = match &mut mode {
            TopicMode::TeacherForced(target) => {
                let y = target[t];
                losses.push(g.cross_entropy(logits, y)?);
                y
            }
            TopicMode::Greedy => argmax(&logp, t == 0),
            TopicMode::Sample(rng) => {
                let mut p: Vec<f64> = logp.iter().map(|v| v.exp()).collect();
                if t == 0 {
                    p[EOS] = 0.0;
                }
                sample_index(&p, rng)
            }
        };
        logprobs.push(logp);
        tokens.push(tok);
        let done = match mode {
            TopicMode::TeacherForced(target) => t + 1 == target.len(),
            _ => tok == EOS,
        };
        if done {
            break;
        }
        prev = tok;
    }
    let matrix = g.stack_rows(&hidden)?;
    let loss = if losses.is_empty() {
        None
    } else {
        let total = g.add_all(&losses)?;
        Some(g.scale(total, 1.0 / losses.len() as f64))
    };
    Ok(TopicMemory {
        hidden,
        matrix,
        tokens,
        logprobs,
        loss,
    })
}

fn argmax(logp: &[f64], forbid_eos: bool) -> TokenId {
    let mut best = usize::MAX;
    for (i, &v) in logp.iter().enumerate() {
        if forbid_eos && i == EOS {
            continue;
        }
        if best == usize::MAX || v > logp[best] {
            best = i;
        }
    }
    best
}
