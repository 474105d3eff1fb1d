//! Bidirectional GRU over an album's image features with residual fusion:
//! `h^v_i = ReLU(W_cat[←h_i; →h_i] + W_f f_i)`.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::params::ModelParams;
use crate::tensor::Tensor;

use super::gru::gru_cell;

/// One context vector per image; every entry is ≥ 0.
#[derive(Clone, Debug)]
pub struct VisualContext {
    /// Rank-1 rows `h^v_i`, length `H`.
    pub rows: Vec<Var>,
    /// The same rows stacked as an `N × H` matrix.
    pub matrix: Var,
}

impl VisualContext {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Runs both directions from zero states and fuses each position.
pub fn encode_album(g: &mut Graph, params: &ModelParams, features: &[Vec<f64>]) -> Result<VisualContext> {
    if features.is_empty() {
        return Err(Error::invalid("album has no images"));
    }
    let wf_shape = params.expect("venc.w_f").shape();
    let (hidden, dim) = (wf_shape[0], wf_shape[1]);
    let mut inputs = Vec::with_capacity(features.len());
    for f in features {
        if f.len() != dim {
            return Err(Error::Shape {
                op: "encode_album",
                left: vec![dim],
                right: vec![f.len()],
            });
        }
        inputs.push(g.constant(Tensor::vector(f.clone())));
    }
    let n = inputs.len();

    let mut fwd = Vec::with_capacity(n);
    let mut h = g.constant(Tensor::zeros(&[hidden]));
    for &x in &inputs {
        h = gru_cell(g, params, "venc.fwd", x, h)?;
        fwd.push(h);
    }
    let mut bwd = vec![h; n];
    let mut h = g.constant(Tensor::zeros(&[hidden]));
    for i in (0..n).rev() {
        h = gru_cell(g, params, "venc.bwd", inputs[i], h)?;
        bwd[i] = h;
    }

    let w_cat = g.param(params, "venc.w_cat");
    let w_f = g.param(params, "venc.w_f");
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let both = g.concat(&[bwd[i], fwd[i]], 0)?;
        let a = g.matmul(w_cat, both)?;
        let b = g.matmul(w_f, inputs[i])?;
        let s = g.add(a, b)?;
        rows.push(g.relu(s));
    }
    let matrix = g.stack_rows(&rows)?;
    Ok(VisualContext { rows, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckOptions};
    use crate::model::{init_params, ModelDims};
    use crate::tensor::Precision;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dims(d: usize, h: usize) -> ModelDims {
        ModelDims {
            hidden: h,
            feature_dim: d,
            images_per_album: 3,
            story_vocab: 6,
            topic_vocab: 6,
        }
    }

    fn random_features(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn run(p: &ModelParams, f: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut g = Graph::new(Precision::Verify);
        let ctx = encode_album(&mut g, p, f).unwrap();
        ctx.rows.iter().map(|&r| g.data(r).to_vec()).collect()
    }

    #[test]
    fn single_image_is_nonnegative() {
        let p = init_params(&dims(5, 4), 1);
        let out = run(&p, &random_features(1, 5, 2));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].len(), 4);
        assert!(out[0].iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn zero_features_and_biases_give_zero() {
        let p = init_params(&dims(5, 4), 1);
        let out = run(&p, &vec![vec![0.0; 5]; 3]);
        assert!(out.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn wrong_feature_dim_is_an_error() {
        let p = init_params(&dims(5, 4), 1);
        let mut g = Graph::new(Precision::Verify);
        assert!(encode_album(&mut g, &p, &[vec![0.0; 4]]).is_err());
    }

    #[test]
    fn reversal_with_tied_directions_reverses_rows() {
        let mut p = init_params(&dims(3, 4), 9);
        for gate in ["z", "r", "h"] {
            for kind in ["w", "b"] {
                let t = p.expect(&format!("venc.fwd.{kind}_{gate}")).clone();
                p.insert(format!("venc.bwd.{kind}_{gate}"), t);
            }
        }
        // Identical halves make W_cat blind to which direction fills which half.
        let cat = p.expect("venc.w_cat").clone();
        let mut data = cat.data().to_vec();
        for r in 0..4 {
            for c in 0..4 {
                data[r * 8 + 4 + c] = data[r * 8 + c];
            }
        }
        p.insert("venc.w_cat", Tensor::matrix(4, 8, data).unwrap());

        let f = random_features(4, 3, 5);
        let mut rev = f.clone();
        rev.reverse();
        let a = run(&p, &f);
        let mut b = run(&p, &rev);
        b.reverse();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn every_row_sees_every_image() {
        let p = init_params(&dims(3, 6), 5);
        let f = random_features(4, 3, 8);
        let base = run(&p, &f);
        // A row with every unit at the ReLU floor has zero sensitivity by construction.
        assert!(base.iter().all(|row| row.iter().any(|&x| x > 0.0)), "fixture has a dead row");
        for j in 0..4 {
            let mut g = f.clone();
            g[j][0] += 0.5;
            let moved = run(&p, &g);
            for i in 0..4 {
                let delta: f64 = base[i].iter().zip(&moved[i]).map(|(a, b)| (a - b).abs()).sum();
                assert!(delta > 0.0, "row {i} ignores image {j}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut p = init_params(&dims(3, 4), 6);
        // Biases away from zero keep ReLU inputs off the kink.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for dir in ["fwd", "bwd"] {
            for gate in ["z", "r", "h"] {
                let b: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..0.5)).collect();
                p.insert(format!("venc.{dir}.b_{gate}"), Tensor::vector(b));
            }
        }
        let mut only = ModelParams::new();
        for (n, t) in p.iter().filter(|(n, _)| n.starts_with("venc.")) {
            only.insert(n, t.clone());
        }
        let f = random_features(3, 3, 2);
        let loss = |p: &ModelParams| {
            let mut g = Graph::new(Precision::Verify);
            let ctx = encode_album(&mut g, p, &f)?;
            let w = g.constant(Tensor::from_rows(&random_features(3, 4, 11))?);
            let y = g.mul(ctx.matrix, w)?;
            let l = g.sum(y);
            g.backward(l)?;
            Ok((g.scalar(l), g.param_grads()))
        };
        let report = grad_check(&only, loss, &GradCheckOptions::default()).unwrap();
        assert!(report.passed(), "{report}");
    }
}
