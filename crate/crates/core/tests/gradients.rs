//! Every differentiable graph operation against central differences, on
//! random shapes and values.

use proptest::prelude::*;
use tavst::gradcheck::{grad_check, GradCheckOptions};
use tavst::model::gru_cell;
use tavst::{Graph, ModelParams, Precision, Result, Tensor, Var};

fn matrix(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, data[..rows * cols].to_vec()).unwrap()
}

/// Checks `sum(op(params) ⊙ w)` for a fixed random weight tensor `w`, so no
/// output coordinate's gradient is trivially uniform.
fn certify(params: &ModelParams, weights: &[f64], op: impl Fn(&mut Graph, &ModelParams) -> Result<Var> + Sync) {
    let loss_fn = |p: &ModelParams| {
        let mut g = Graph::new(Precision::Verify);
        let out = op(&mut g, p)?;
        let n = g.data(out).len();
        let w = Tensor::new(g.shape(out).to_vec(), weights[..n].to_vec())?;
        let w = g.constant(w);
        let prod = g.mul(out, w)?;
        let loss = g.sum(prod);
        g.backward(loss)?;
        Ok((g.scalar(loss), g.param_grads()))
    };
    let report = grad_check(params, loss_fn, &GradCheckOptions::default()).unwrap();
    assert!(report.passed(), "{report}");
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0f64..2.0, n)
}

/// Values at least 0.05 away from 0, where ReLU is differentiable.
fn off_kink(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((0.05f64..2.0, any::<bool>()).prop_map(|(x, neg)| if neg { -x } else { x }), n)
}

fn two(a: Tensor, b: Tensor) -> ModelParams {
    let mut p = ModelParams::new();
    p.insert("a", a);
    p.insert("b", b);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_matrix_and_vector(m in 1usize..4, k in 1usize..4, n in 1usize..4, a in values(9), b in values(9), w in values(9)) {
        let p = two(matrix(m, k, &a), matrix(k, n, &b));
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.matmul(a, b) });
        let p = two(matrix(m, k, &a), Tensor::vector(b[..k].to_vec()));
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.matmul(a, b) });
    }

    #[test]
    fn elementwise_binary(m in 1usize..4, n in 1usize..4, a in values(9), b in values(9), w in values(9), c in -2.0f64..2.0, mix in 0.0f64..1.0) {
        let p = two(matrix(m, n, &a), matrix(m, n, &b));
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.add(a, b) });
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.sub(a, b) });
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.mul(a, b) });
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.mix(mix, a, b) });
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.add_all(&[a, b, a]) });
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); Ok(g.scale(a, c)) });
    }

    #[test]
    fn a_node_used_twice_gets_both_contributions(n in 1usize..6, a in values(6), w in values(6)) {
        let mut p = ModelParams::new();
        p.insert("a", Tensor::vector(a[..n].to_vec()));
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); let t = g.tanh(a); g.mul(t, a) });
    }

    #[test]
    fn activations(n in 1usize..7, a in values(6), r in off_kink(6), w in values(6)) {
        let mut p = ModelParams::new();
        p.insert("a", Tensor::vector(a[..n].to_vec()));
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); Ok(g.tanh(a)) });
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); Ok(g.sigmoid(a)) });
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); Ok(g.softmax(a)) });
        let mut q = ModelParams::new();
        q.insert("a", Tensor::vector(r[..n].to_vec()));
        certify(&q, &w, |g, p| { let a = g.param(p, "a"); Ok(g.relu(a)) });
    }

    #[test]
    fn cross_entropy_over_every_target(n in 2usize..7, a in values(6), t in 0usize..6) {
        let mut p = ModelParams::new();
        p.insert("a", Tensor::vector(a[..n].to_vec()));
        let target = t % n;
        certify(&p, &[1.0], |g, p| { let a = g.param(p, "a"); g.cross_entropy(a, target) });
    }

    #[test]
    fn shape_operations(m in 1usize..4, n in 1usize..4, a in values(9), b in values(9), w in values(18), i in 0usize..3) {
        let p = two(matrix(m, n, &a), matrix(m, n, &b));
        let row = i % m;
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.concat(&[a, b], 0) });
        certify(&p, &w, |g, p| { let (a, b) = (g.param(p, "a"), g.param(p, "b")); g.concat(&[a, b], 1) });
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); g.row(a, row) });
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); Ok(g.transpose(a)) });
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); g.reshape(a, &[m * n]) });
        certify(&p, &w, |g, p| {
            let (a, b) = (g.param(p, "a"), g.param(p, "b"));
            let (ra, rb) = (g.row(a, row)?, g.row(b, 0)?);
            g.stack_rows(&[ra, rb, ra])
        });
        certify(&p, &w, |g, p| { let a = g.param(p, "a"); let t = g.transpose(a); let s = g.sum(t); Ok(s) });
    }

    #[test]
    fn detach_blocks_the_gradient_path(n in 1usize..5, a in values(4), w in values(4)) {
        let mut p = ModelParams::new();
        p.insert("a", Tensor::vector(a[..n].to_vec()));
        let mut g = Graph::new(Precision::Verify);
        let x = g.param(&p, "a");
        let d = g.detach(x);
        let y = g.mul(x, d).unwrap();
        let wt = g.constant(Tensor::vector(w[..n].to_vec()));
        let z = g.mul(y, wt).unwrap();
        let loss = g.sum(z);
        g.backward(loss).unwrap();
        let grad = g.param_grads();
        for j in 0..n {
            prop_assert!((grad.get("a").unwrap()[j] - w[j] * a[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_cell_against_central_differences(seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (input, hidden) = (3, 4);
        let mut p = ModelParams::new();
        tavst::model::init_gru(&mut p, "gru", input, hidden, &mut rng);
        for (_, t) in p.iter_mut() {
            for x in t.data_mut() {
                *x += rng.random_range(-0.3..0.3);
            }
        }
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        p.insert("h", Tensor::vector((0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect()));
        let w: Vec<f64> = (0..hidden).map(|_| rng.random_range(-1.0..1.0)).collect();
        certify(&p, &w, |g, p| {
            let xv = g.vector(x.clone());
            let h = g.param(p, "h");
            gru_cell(g, p, "gru", xv, h)
        });
    }
}
