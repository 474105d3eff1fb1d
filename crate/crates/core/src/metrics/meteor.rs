//! METEOR-lite: exact unigram alignment, `F_mean = 10PR/(R + 9P)` and a
//! fragmentation penalty `0.5·(chunks/m)³`.
//!
//! The alignment is built by tiling: the longest run of still-unmatched tokens
//! that appears contiguously on both sides is matched first (leftmost in the
//! hypothesis, then in the reference, on ties), until no equal pair is left.
//! Leftover equal tokens form runs of length 1, so `m` is always maximal; the
//! chunk count is low but not guaranteed minimal.

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MeteorAlignment {
    /// `pairs[k] = (hyp index, ref index)`, in hypothesis order.
    pub pairs: Vec<(usize, usize)>,
    pub matches: usize,
    pub chunks: usize,
}

pub fn meteor_alignment(hyp: &[String], reference: &[String]) -> MeteorAlignment {
    let mut hyp_used = vec![false; hyp.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    loop {
        let mut best = (0, 0, 0);
        for i in 0..hyp.len() {
            for j in 0..reference.len() {
                let mut k = 0;
                while i + k < hyp.len()
                    && j + k < reference.len()
                    && !hyp_used[i + k]
                    && !ref_used[j + k]
                    && hyp[i + k] == reference[j + k]
                {
                    k += 1;
                }
                if k > best.0 {
                    best = (k, i, j);
                }
            }
        }
        let (len, i, j) = best;
        if len == 0 {
            break;
        }
        for k in 0..len {
            hyp_used[i + k] = true;
            ref_used[j + k] = true;
            pairs.push((i + k, j + k));
        }
    }
    pairs.sort_unstable();
    let chunks = count_chunks(&pairs);
    MeteorAlignment {
        matches: pairs.len(),
        pairs,
        chunks,
    }
}

/// Runs of pairs adjacent on both sides.
pub(crate) fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    let mut chunks = 0;
    for (k, &(i, j)) in pairs.iter().enumerate() {
        let continues = k > 0 && pairs[k - 1].0 + 1 == i && pairs[k - 1].1 + 1 == j;
        if !continues {
            chunks += 1;
        }
    }
    chunks
}

pub(crate) fn score_from_counts(matches: usize, chunks: usize, hyp_len: usize, ref_len: usize) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let p = m / hyp_len as f64;
    let r = m / ref_len as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m).powi(3);
    f_mean * (1.0 - penalty)
}

pub fn meteor_lite(hyp: &[String], reference: &[String]) -> f64 {
    let a = meteor_alignment(hyp, reference);
    score_from_counts(a.matches, a.chunks, hyp.len(), reference.len())
}
