//! ROUGE-L: LCS-based F-measure with β = 1.2.

const BETA: f64 = 1.2;

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// 0 when either side is empty or nothing is shared.
pub fn rouge_l(hyp: &[String], reference: &[String]) -> f64 {
    if hyp.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let lcs = lcs_len(hyp, reference) as f64;
    if lcs == 0.0 {
        return 0.0;
    }
    let r = lcs / reference.len() as f64;
    let p = lcs / hyp.len() as f64;
    let b2 = BETA * BETA;
    (1.0 + b2) * r * p / (r + b2 * p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests::toks;

    #[test]
    fn examples() {
        assert_eq!(rouge_l(&toks("a b c"), &toks("a b c")), 1.0);
        let expect = (1.0 + 1.44) * 0.75 / (1.0 + 1.44 * 0.75);
        assert!((rouge_l(&toks("a b c d"), &toks("a c d")) - expect).abs() < 1e-15);
        assert!((expect - 0.8798).abs() < 1e-4);
        assert_eq!(rouge_l(&toks("x y"), &toks("a b")), 0.0);
        assert_eq!(rouge_l(&[], &toks("a b")), 0.0);
    }

    #[test]
    fn deleting_a_matched_token_never_raises_recall() {
        let h = toks("the cat sat on the mat");
        let r = toks("the cat was on the mat");
        let base = lcs_len(&h, &r);
        for i in 0..h.len() {
            let mut shorter = h.clone();
            shorter.remove(i);
            assert!(lcs_len(&shorter, &r) <= base);
        }
    }
}
