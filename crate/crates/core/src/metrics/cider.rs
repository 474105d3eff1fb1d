//! CIDEr-D: TF-IDF n-gram cosine (n = 1..4) with clipping against the
//! reference and a Gaussian length penalty (σ = 6), scaled by 10.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::{check_corpus, ngram_counts, Tokens};

const SIGMA: f64 = 6.0;

/// Document frequencies taken from a reference corpus, one document per sample.
#[derive(Clone, Debug)]
pub struct CiderScorer {
    df: HashMap<Vec<String>, usize>,
    log_docs: f64,
}

struct Weighted<'a> {
    vecs: [HashMap<&'a [String], f64>; 4],
    norms: [f64; 4],
    len: usize,
}

impl CiderScorer {
    pub fn new(reference_corpus: &[Vec<Vec<String>>]) -> Result<Self> {
        if reference_corpus.len() < 2 {
            return Err(Error::invalid("CIDEr-D needs at least 2 reference documents"));
        }
        let mut df: HashMap<Vec<String>, usize> = HashMap::new();
        for refs in reference_corpus {
            let mut seen: std::collections::HashSet<&[String]> = Default::default();
            for r in refs {
                for n in 1..=4 {
                    seen.extend(ngram_counts(r, n).into_keys());
                }
            }
            for g in seen {
                *df.entry(g.to_vec()).or_default() += 1;
            }
        }
        Ok(CiderScorer {
            df,
            log_docs: (reference_corpus.len() as f64).ln(),
        })
    }

    fn idf(&self, g: &[String]) -> f64 {
        self.log_docs - (self.df.get(g).copied().unwrap_or(0).max(1) as f64).ln()
    }

    fn weigh<'a>(&self, tokens: &'a Tokens) -> Weighted<'a> {
        let mut norms = [0.0; 4];
        let vecs = std::array::from_fn(|k| {
            let v: HashMap<&[String], f64> = ngram_counts(tokens, k + 1)
                .into_iter()
                .map(|(g, c)| (g, c as f64 * self.idf(g)))
                .collect();
            norms[k] = v.values().map(|x| x * x).sum::<f64>().sqrt();
            v
        });
        Weighted {
            vecs,
            norms,
            len: tokens.len(),
        }
    }

    /// Score of one hypothesis against its references.
    pub fn score(&self, hyp: &Tokens, refs: &[Vec<String>]) -> f64 {
        if refs.is_empty() {
            return 0.0;
        }
        let h = self.weigh(hyp);
        let mut total = 0.0;
        for r in refs {
            let r = self.weigh(r);
            let delta = h.len as f64 - r.len as f64;
            let penalty = (-(delta * delta) / (2.0 * SIGMA * SIGMA)).exp();
            for k in 0..4 {
                if h.norms[k] == 0.0 || r.norms[k] == 0.0 {
                    continue;
                }
                let dot: f64 = h.vecs[k]
                    .iter()
                    .filter_map(|(g, &vh)| r.vecs[k].get(g).map(|&vr| vh.min(vr) * vr))
                    .sum();
                total += penalty * dot / (h.norms[k] * r.norms[k]);
            }
        }
        10.0 * total / (4.0 * refs.len() as f64)
    }
}

/// Corpus CIDEr-D with document frequencies from `refs`.
pub fn cider_d(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> Result<f64> {
    check_corpus(hyps, refs)?;
    let scorer = CiderScorer::new(refs)?;
    Ok(super::mean_over_pairs(hyps, refs, |h, rs| scorer.score(h, rs)))
}
