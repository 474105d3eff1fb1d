//! Gated recurrent unit.
//!
//! `z = σ(W_z[x;h] + b_z)`, `r = σ(W_r[x;h] + b_r)`,
//! `h̃ = tanh(W_h[x; r⊙h] + b_h)`, `h' = h + z⊙(h̃ − h)`.

use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{glorot, ModelParams};
use crate::tensor::Tensor;

/// Adds `{prefix}.w_{z,r,h}` (`hidden × (input + hidden)`) and zero biases.
pub fn init_gru(p: &mut ModelParams, prefix: &str, input: usize, hidden: usize, rng: &mut impl Rng) {
    for gate in ["z", "r", "h"] {
        p.insert(format!("{prefix}.w_{gate}"), glorot(hidden, input + hidden, rng));
        p.insert(format!("{prefix}.b_{gate}"), Tensor::zeros(&[hidden]));
    }
}

/// One step from hidden state `h` on input `x`, both rank 1.
pub fn gru_cell(g: &mut Graph, params: &ModelParams, prefix: &str, x: Var, h: Var) -> Result<Var> {
    let xh = g.concat(&[x, h], 0)?;
    let gate = |g: &mut Graph, name: &str, input: Var| -> Result<Var> {
        let w = g.param(params, &format!("{prefix}.w_{name}"));
        let b = g.param(params, &format!("{prefix}.b_{name}"));
        let y = g.matmul(w, input)?;
        g.add(y, b)
    };
    let z = gate(g, "z", xh)?;
    let z = g.sigmoid(z);
    let r = gate(g, "r", xh)?;
    let r = g.sigmoid(r);
    let rh = g.mul(r, h)?;
    let xrh = g.concat(&[x, rh], 0)?;
    let cand = gate(g, "h", xrh)?;
    let cand = g.tanh(cand);
    let delta = g.sub(cand, h)?;
    let step = g.mul(z, delta)?;
    g.add(h, step)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, GradCheckOptions};
    use crate::tensor::Precision;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_params(input: usize, hidden: usize) -> ModelParams {
        let mut p = ModelParams::new();
        for gate in ["z", "r", "h"] {
            p.insert(format!("g.w_{gate}"), Tensor::zeros(&[hidden, input + hidden]));
            p.insert(format!("g.b_{gate}"), Tensor::zeros(&[hidden]));
        }
        p
    }

    #[test]
    fn zero_weights_halve_the_state() {
        let p = zero_params(3, 4);
        let mut g = Graph::new(Precision::Verify);
        let x = g.vector(vec![1.0, -2.0, 0.5]);
        let h = g.vector(vec![0.8, -0.4, 0.0, 2.0]);
        let out = gru_cell(&mut g, &p, "g", x, h).unwrap();
        assert_eq!(g.data(out), &[0.4, -0.2, 0.0, 1.0]);
    }

    #[test]
    fn saturated_update_gate_keeps_previous_state() {
        let mut p = zero_params(2, 2);
        p.insert("g.b_z", Tensor::vector(vec![-1e3, -1e3]));
        p.insert("g.b_h", Tensor::vector(vec![5.0, 5.0]));
        let mut g = Graph::new(Precision::Verify);
        let x = g.vector(vec![1.0, 1.0]);
        let h = g.vector(vec![0.3, -0.7]);
        let out = gru_cell(&mut g, &p, "g", x, h).unwrap();
        assert_eq!(g.data(out), &[0.3, -0.7]);
    }

    #[test]
    fn zero_state_keeps_only_the_candidate_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut p = ModelParams::new();
        init_gru(&mut p, "g", 2, 3, &mut rng);
        let x = [0.7, -1.1];
        let mut g = Graph::new(Precision::Verify);
        let xv = g.vector(x.to_vec());
        let h0 = g.vector(vec![0.0; 3]);
        let out = gru_cell(&mut g, &p, "g", xv, h0).unwrap();
        let (wz, wh) = (p.expect("g.w_z"), p.expect("g.w_h"));
        for i in 0..3 {
            let dot = |w: &Tensor| w.row(i)[0] * x[0] + w.row(i)[1] * x[1];
            let z = 1.0 / (1.0 + (-dot(wz)).exp());
            let expect = z * dot(wh).tanh();
            assert!((g.data(out)[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = ModelParams::new();
        init_gru(&mut p, "g", 3, 4, &mut rng);
        for gate in ["z", "r", "h"] {
            p.insert(format!("g.b_{gate}"), Tensor::vector(glorot(4, 1, &mut rng).data().to_vec()));
        }
        let loss = |p: &ModelParams| {
            let mut g = Graph::new(Precision::Verify);
            let x = g.vector(vec![0.5, -1.0, 0.25]);
            let mut h = g.vector(vec![0.1, 0.2, -0.3, 0.4]);
            for _ in 0..3 {
                h = gru_cell(&mut g, p, "g", x, h)?;
            }
            let w = g.vector(vec![1.0, -2.0, 0.5, 3.0]);
            let y = g.mul(h, w)?;
            let l = g.sum(y);
            g.backward(l)?;
            Ok((g.scalar(l), g.param_grads()))
        };
        let report = grad_check(&p, loss, &GradCheckOptions::default()).unwrap();
        assert!(report.passed(), "{report}");
    }
}
