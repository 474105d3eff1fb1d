//! Caption metrics over token lists: corpus BLEU-1..4, ROUGE-L, CIDEr-D and
//! METEOR-lite (exact unigram matching only).
//!
//! Multi-reference pairs score against each reference and keep the best for
//! ROUGE-L and METEOR-lite; BLEU and CIDEr-D use all references jointly.

mod bleu;
mod cider;
mod meteor;
mod rouge;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

pub use bleu::{bleu, bleu_stats, BleuStats};
pub use cider::{cider_d, CiderScorer};
pub use meteor::{meteor_alignment, meteor_lite, MeteorAlignment};
pub use rouge::{lcs_len, rouge_l};

use crate::error::{Error, Result};

pub type Tokens = [String];

/// N-gram counts of `tokens` for one `n`.
pub(crate) fn ngram_counts(tokens: &Tokens, n: usize) -> HashMap<&[String], usize> {
    let mut out = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_default() += 1;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MeteorAggregation {
    /// Mean of per-pair scores.
    #[default]
    Sentence,
    /// One score from summed matches, chunks and lengths.
    Corpus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub bleu: [f64; 4],
    pub rouge_l: f64,
    /// On a 0..10 scale.
    pub cider_d: f64,
    pub meteor_lite: f64,
}

impl MetricReport {
    pub fn fields(&self) -> [(&'static str, f64); 7] {
        [
            ("bleu1", self.bleu[0]),
            ("bleu2", self.bleu[1]),
            ("bleu3", self.bleu[2]),
            ("bleu4", self.bleu[3]),
            ("rouge_l", self.rouge_l),
            ("cider_d", self.cider_d),
            ("meteor_lite", self.meteor_lite),
        ]
    }

    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        self.fields().iter().map(|(k, v)| format!("{k}={v:.6}\n")).collect()
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.fields() {
            writeln!(f, "{k:<12} {v:>9.4}")?;
        }
        Ok(())
    }
}

fn check_corpus(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> Result<()> {
    if hyps.is_empty() {
        return Err(Error::invalid("empty evaluation corpus"));
    }
    if hyps.len() != refs.len() {
        return Err(Error::invalid(format!("{} hypotheses but {} reference sets", hyps.len(), refs.len())));
    }
    if refs.iter().any(Vec::is_empty) {
        return Err(Error::invalid("every hypothesis needs at least one reference"));
    }
    Ok(())
}

/// Mean of `f(hyp, refs)` over pairs; pairs run in parallel, summed in order.
pub(crate) fn mean_over_pairs<F>(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>], f: F) -> f64
where
    F: Fn(&Tokens, &[Vec<String>]) -> f64 + Sync,
{
    let scores: Vec<f64> = hyps.par_iter().zip(refs.par_iter()).map(|(h, r)| f(h, r)).collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

/// ROUGE-L averaged over pairs, best reference per pair.
pub fn rouge_l_corpus(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> Result<f64> {
    check_corpus(hyps, refs)?;
    Ok(mean_over_pairs(hyps, refs, |h, rs| rs.iter().map(|r| rouge_l(h, r)).fold(0.0, f64::max)))
}

/// METEOR-lite over a corpus, best reference per pair.
pub fn meteor_corpus(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>], agg: MeteorAggregation) -> Result<f64> {
    check_corpus(hyps, refs)?;
    match agg {
        MeteorAggregation::Sentence => Ok(mean_over_pairs(hyps, refs, |h, rs| {
            rs.iter().map(|r| meteor_lite(h, r)).fold(0.0, f64::max)
        })),
        MeteorAggregation::Corpus => {
            let (mut m, mut chunks, mut lh, mut lr) = (0usize, 0usize, 0usize, 0usize);
            for (h, rs) in hyps.iter().zip(refs) {
                let best = rs
                    .iter()
                    .max_by(|a, b| meteor_lite(h, a).total_cmp(&meteor_lite(h, b)))
                    .expect("references checked non-empty");
                let a = meteor_alignment(h, best);
                m += a.matches;
                chunks += a.chunks;
                lh += h.len();
                lr += best.len();
            }
            Ok(meteor::score_from_counts(m, chunks, lh, lr))
        }
    }
}

/// All metrics for one corpus.
pub fn evaluate(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> Result<MetricReport> {
    check_corpus(hyps, refs)?;
    Ok(MetricReport {
        bleu: bleu(hyps, refs)?,
        rouge_l: rouge_l_corpus(hyps, refs)?,
        cider_d: cider_d(hyps, refs)?,
        meteor_lite: meteor_corpus(hyps, refs, MeteorAggregation::Sentence)?,
    })
}

/// Sentence-level metric used as the RL reward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RewardKind {
    #[default]
    MeteorLite,
    Bleu4,
    Cider,
}

impl FromStr for RewardKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "meteor_lite" => Ok(RewardKind::MeteorLite),
            "bleu4" => Ok(RewardKind::Bleu4),
            "cider" => Ok(RewardKind::Cider),
            _ => Err(Error::invalid(format!("unknown reward {s:?} (meteor_lite|bleu4|cider)"))),
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardKind::MeteorLite => "meteor_lite",
            RewardKind::Bleu4 => "bleu4",
            RewardKind::Cider => "cider",
        })
    }
}

/// A sentence-level reward function; CIDEr takes its document base from the
/// references it was built with.
#[derive(Clone, Debug)]
pub enum Reward {
    MeteorLite,
    Bleu4,
    Cider(CiderScorer),
}

impl Reward {
    pub fn new(kind: RewardKind, reference_corpus: &[Vec<Vec<String>>]) -> Result<Self> {
        Ok(match kind {
            RewardKind::MeteorLite => Reward::MeteorLite,
            RewardKind::Bleu4 => Reward::Bleu4,
            RewardKind::Cider => Reward::Cider(CiderScorer::new(reference_corpus)?),
        })
    }

    pub fn score(&self, hyp: &Tokens, reference: &Tokens) -> f64 {
        match self {
            Reward::MeteorLite => meteor_lite(hyp, reference),
            Reward::Bleu4 => bleu_stats(std::slice::from_ref(&hyp.to_vec()), &[vec![reference.to_vec()]]).bleu()[3],
            Reward::Cider(s) => s.score(hyp, std::slice::from_ref(&reference.to_vec())),
        }
    }
}
