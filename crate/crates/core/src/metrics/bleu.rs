//! Corpus BLEU with clipped n-gram counts and a brevity penalty.

use std::collections::HashMap;

use crate::error::Result;

use super::{check_corpus, ngram_counts};

/// Summed clipped matches and candidate n-gram totals for n = 1..4, plus the
/// candidate length and the closest-reference length.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [usize; 4],
    pub totals: [usize; 4],
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuStats {
    pub fn brevity_penalty(&self) -> f64 {
        if self.hyp_len == 0 {
            return 0.0;
        }
        (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp().min(1.0)
    }

    /// Unsmoothed modified precisions; an empty denominator counts as 0.
    pub fn precisions(&self) -> [f64; 4] {
        std::array::from_fn(|k| {
            if self.totals[k] == 0 {
                0.0
            } else {
                self.matches[k] as f64 / self.totals[k] as f64
            }
        })
    }

    /// BLEU-1..4. Zero precisions for n ≥ 2 become `(m+1)/(t+1)`; a zero
    /// unigram precision makes every score 0.
    pub fn bleu(&self) -> [f64; 4] {
        let raw = self.precisions();
        let p: [f64; 4] = std::array::from_fn(|k| {
            if k > 0 && raw[k] == 0.0 {
                (self.matches[k] + 1) as f64 / (self.totals[k] + 1) as f64
            } else {
                raw[k]
            }
        });
        let bp = self.brevity_penalty();
        let mut out = [0.0; 4];
        if raw[0] == 0.0 {
            return out;
        }
        let mut log_sum = 0.0;
        for n in 0..4 {
            log_sum += p[n].ln();
            out[n] = bp * (log_sum / (n + 1) as f64).exp();
        }
        out
    }
}

pub fn bleu_stats(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> BleuStats {
    let mut s = BleuStats::default();
    for (h, rs) in hyps.iter().zip(refs) {
        for n in 1..=4 {
            let hc = ngram_counts(h, n);
            let mut max_ref: HashMap<&[String], usize> = HashMap::new();
            for r in rs {
                for (g, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(g).or_default();
                    *e = (*e).max(c);
                }
            }
            s.matches[n - 1] += hc.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum::<usize>();
            s.totals[n - 1] += h.len().saturating_sub(n - 1);
        }
        s.hyp_len += h.len();
        // Closest reference length, shorter on ties.
        s.ref_len += rs
            .iter()
            .map(Vec::len)
            .min_by_key(|&l| ((l as i64 - h.len() as i64).abs(), l))
            .unwrap_or(0);
    }
    s
}

/// Corpus BLEU-1..4.
pub fn bleu(hyps: &[Vec<String>], refs: &[Vec<Vec<String>>]) -> Result<[f64; 4]> {
    check_corpus(hyps, refs)?;
    Ok(bleu_stats(hyps, refs).bleu())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests::toks;

    fn one(h: &str, r: &str) -> [f64; 4] {
        bleu(&[toks(h)], &[vec![toks(r)]]).unwrap()
    }

    #[test]
    fn perfect_match_is_one() {
        assert_eq!(one("a b c d e", "a b c d e"), [1.0; 4]);
    }

    #[test]
    fn hand_counted_unigram_precision() {
        assert!((one("a b c", "a b d")[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_is_zero_and_unsmoothed_product_is_zero() {
        let s = bleu_stats(&[toks("a b c d")], &[vec![toks("w x y z")]]);
        assert_eq!(s.precisions().iter().product::<f64>(), 0.0);
        assert_eq!(s.bleu(), [0.0; 4]);
    }

    #[test]
    fn smoothing_only_rescues_zero_higher_orders() {
        // Unigrams match, no bigram does.
        let s = bleu_stats(&[toks("b a d c")], &[vec![toks("a b c d")]]);
        assert_eq!(s.precisions()[1], 0.0);
        let b = s.bleu();
        assert!(b[3] > 0.0);
        assert!((b[1] - (1.0f64 * (1.0 / 4.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn brevity_penalty_applies_to_short_hypotheses() {
        let b = one("a b", "a b c d");
        assert!((b[0] - (1.0f64 - 2.0).exp()).abs() < 1e-15);
    }

    #[test]
    fn clipping_caps_repeated_tokens() {
        let s = bleu_stats(&[toks("the the the")], &[vec![toks("the cat")]]);
        assert_eq!(s.matches[0], 1);
    }

    #[test]
    fn closest_reference_length_prefers_shorter_on_ties() {
        let s = bleu_stats(&[toks("a b c")], &[vec![toks("a b"), toks("a b c d")]]);
        assert_eq!(s.ref_len, 2);
    }
}
