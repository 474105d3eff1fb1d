//! Free-running generation: topic by greedy decoding, stories by beam search
//! (greedy when the beam is 1), repeated through the iterative stages.

use crate::data::TokenId;
use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::model::{decode_story, decode_topic, encode_album, init_state, joint_contexts, CoattentionScope, StoryMode, TopicInput, TopicMode, VisualContext};
use crate::params::ModelParams;
use crate::tensor::Precision;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerateOptions {
    pub n_iter: usize,
    pub beam: usize,
    pub scope: CoattentionScope,
    pub precision: Precision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageAttention {
    pub attn_v: Vec<Vec<f64>>,
    pub attn_t: Vec<Vec<f64>>,
}

/// Output of the last stage plus each stage's topic and attention.
#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub topics: Vec<Vec<TokenId>>,
    pub story: Vec<Vec<TokenId>>,
    pub attention: Vec<StageAttention>,
}

impl Generated {
    pub fn topic(&self) -> &[TokenId] {
        self.topics.last().map_or(&[], Vec::as_slice)
    }
}

fn one_stage(
    g: &mut Graph,
    params: &ModelParams,
    vis: &VisualContext,
    input: TopicInput<'_>,
    opts: &GenerateOptions,
    out: &mut Generated,
) -> Result<Vec<Var>> {
    let s0 = init_state(g, params, input)?;
    let mem = decode_topic(g, params, s0, TopicMode::Greedy)?;
    let joint = joint_contexts(g, params, vis, &mem, opts.scope)?;
    let mode = if opts.beam <= 1 { StoryMode::Greedy } else { StoryMode::Beam(opts.beam) };
    let story = decode_story(g, params, &joint, mode)?;
    out.topics.push(mem.tokens);
    out.story = story.sub_stories;
    out.attention.push(StageAttention {
        attn_v: joint.attn_v,
        attn_t: joint.attn_t,
    });
    Ok(story.last_hidden)
}

pub fn generate(params: &ModelParams, features: &[Vec<f64>], opts: &GenerateOptions) -> Result<Generated> {
    let mut g = Graph::new(opts.precision);
    let vis = encode_album(&mut g, params, features)?;
    let mut out = Generated {
        topics: Vec::new(),
        story: Vec::new(),
        attention: Vec::new(),
    };
    let mut last = one_stage(&mut g, params, &vis, TopicInput::Initial(&vis), opts, &mut out)?;
    for _ in 0..opts.n_iter {
        last = one_stage(&mut g, params, &vis, TopicInput::Iterative(&last), opts, &mut out)?;
    }
    Ok(out)
}

/// Generation with the initial stage only.
pub fn generate_without_iu(params: &ModelParams, features: &[Vec<f64>], opts: &GenerateOptions) -> Result<Generated> {
    let mut g = Graph::new(opts.precision);
    let vis = encode_album(&mut g, params, features)?;
    let mut out = Generated {
        topics: Vec::new(),
        story: Vec::new(),
        attention: Vec::new(),
    };
    one_stage(&mut g, params, &vis, TopicInput::Initial(&vis), opts, &mut out)?;
    Ok(out)
}
