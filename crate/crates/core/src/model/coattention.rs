//! Bilinear co-attention between visual context rows and topic memory rows.
//!
//! With `V` (`N'×H`) and `T` (`M×H`) stored row-major:
//! `C = tanh(T W_b Vᵀ)` (`M×N'`),
//! `H^v = tanh(W_v Vᵀ + (W_t Tᵀ) C)`, `H^t = tanh(W_t Tᵀ + (W_v Vᵀ) Cᵀ)`,
//! `a^v = softmax(w_hv H^v)`, `a^t = softmax(w_ht H^t)`, and the attended
//! vectors are `Vᵀ a^v` and `Tᵀ a^t`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ModelParams;

use super::encoder::VisualContext;
use super::linear;
use super::topic::TopicMemory;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CoattentionScope {
    /// Each image attends over the topic memory on its own.
    #[default]
    PerImage,
    /// One joint vector for the whole album, shared by every image.
    Global,
}

impl FromStr for CoattentionScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_image" => Ok(CoattentionScope::PerImage),
            "global" => Ok(CoattentionScope::Global),
            _ => Err(Error::invalid(format!("unknown coattention scope {s:?} (per_image|global)"))),
        }
    }
}

impl fmt::Display for CoattentionScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoattentionScope::PerImage => "per_image",
            CoattentionScope::Global => "global",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CoAttention {
    /// Attended visual vector, length `H`.
    pub visual: Var,
    /// Attended topic vector, length `H`.
    pub topic: Var,
    /// `a^v`, length `N'`.
    pub weights_v: Var,
    /// `a^t`, length `M`.
    pub weights_t: Var,
}

#[derive(Clone, Debug)]
pub struct JointContext {
    /// `j_i`, one rank-1 vector per image.
    pub rows: Vec<Var>,
    /// Visual attention per image (per-image scope) or once (global scope).
    pub attn_v: Vec<Vec<f64>>,
    pub attn_t: Vec<Vec<f64>>,
}

pub fn coattend(g: &mut Graph, params: &ModelParams, hv: Var, ht: Var) -> Result<CoAttention> {
    let (n, hidden) = g.value(hv).dims2();
    let (m, ht_cols) = g.value(ht).dims2();
    if g.value(hv).rank() != 2 || g.value(ht).rank() != 2 || hidden != ht_cols {
        return Err(Error::Shape {
            op: "coattend",
            left: g.shape(hv).to_vec(),
            right: g.shape(ht).to_vec(),
        });
    }
    let w_b = g.param(params, "coatt.w_b");
    let w_v = g.param(params, "coatt.w_v");
    let w_t = g.param(params, "coatt.w_t");
    let w_hv = g.param(params, "coatt.w_hv");
    let w_ht = g.param(params, "coatt.w_ht");

    let vt = g.transpose(hv);
    let tt = g.transpose(ht);
    let tb = g.matmul(ht, w_b)?;
    let c = g.matmul(tb, vt)?;
    let c = g.tanh(c);
    let ct = g.transpose(c);
    let wv = g.matmul(w_v, vt)?;
    let wt = g.matmul(w_t, tt)?;

    let cross_v = g.matmul(wt, c)?;
    let hv_mix = g.add(wv, cross_v)?;
    let hv_mix = g.tanh(hv_mix);
    let cross_t = g.matmul(wv, ct)?;
    let ht_mix = g.add(wt, cross_t)?;
    let ht_mix = g.tanh(ht_mix);

    let sv = g.matmul(w_hv, hv_mix)?;
    let sv = g.reshape(sv, &[n])?;
    let weights_v = g.softmax(sv);
    let st = g.matmul(w_ht, ht_mix)?;
    let st = g.reshape(st, &[m])?;
    let weights_t = g.softmax(st);

    let visual = g.matmul(vt, weights_v)?;
    let topic = g.matmul(tt, weights_t)?;
    Ok(CoAttention {
        visual,
        topic,
        weights_v,
        weights_t,
    })
}

/// `j_i = W_fc [visual_i ; topic_i]` for every image.
///
/// In per-image scope the visual side is `h^v_i` itself, which is what a
/// singleton attention returns.
pub fn joint_contexts(
    g: &mut Graph,
    params: &ModelParams,
    vis: &VisualContext,
    mem: &TopicMemory,
    scope: CoattentionScope,
) -> Result<JointContext> {
    let mut out = JointContext {
        rows: Vec::with_capacity(vis.len()),
        attn_v: Vec::new(),
        attn_t: Vec::new(),
    };
    match scope {
        CoattentionScope::PerImage => {
            for &row in &vis.rows {
                let h = g.value(row).numel();
                let single = g.reshape(row, &[1, h])?;
                let co = coattend(g, params, single, mem.matrix)?;
                let both = g.concat(&[row, co.topic], 0)?;
                out.rows.push(linear(g, params, "coatt.w_fc", None, both)?);
                out.attn_v.push(g.data(co.weights_v).to_vec());
                out.attn_t.push(g.data(co.weights_t).to_vec());
            }
        }
        CoattentionScope::Global => {
            let co = coattend(g, params, vis.matrix, mem.matrix)?;
            let both = g.concat(&[co.visual, co.topic], 0)?;
            let j = linear(g, params, "coatt.w_fc", None, both)?;
            out.rows = vec![j; vis.len()];
            out.attn_v.push(g.data(co.weights_v).to_vec());
            out.attn_t.push(g.data(co.weights_t).to_vec());
        }
    }
    Ok(out)
}
