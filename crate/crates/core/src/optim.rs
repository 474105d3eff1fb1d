//! Adam with bias correction.

use std::collections::BTreeMap;

use crate::params::ModelParams;
use crate::tensor::Precision;

#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    /// `(name prefix, learning rate)`; the first matching prefix wins.
    rates: Vec<(String, f64)>,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            rates: Vec::new(),
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    /// Uses `learning_rate` for parameters whose name starts with `prefix`.
    pub fn with_rate_for(mut self, prefix: &str, learning_rate: f64) -> Self {
        self.rates.push((prefix.to_string(), learning_rate));
        self
    }

    pub fn rate_for(&self, name: &str) -> f64 {
        self.rates
            .iter()
            .find(|(p, _)| name.starts_with(p.as_str()))
            .map_or(self.learning_rate, |&(_, lr)| lr)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients stored in `params`, then zeroes them.
    pub fn step(&mut self, params: &mut ModelParams, precision: Precision) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let lr = self.rate_for(name);
            let n = p.numel();
            let m = self.m.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let v = self.v.entry(name.to_string()).or_insert_with(|| vec![0.0; n]);
            let grad = p.grad().to_vec();
            let data = p.data_mut();
            for i in 0..n {
                let g = grad[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                data[i] = precision.round(data[i] - lr * mhat / (vhat.sqrt() + self.epsilon));
            }
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn scalar_params(x: f64) -> ModelParams {
        let mut p = ModelParams::new();
        p.insert("x", Tensor::vector(vec![x]));
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut p = scalar_params(1.25);
        let mut adam = Adam::new(0.1);
        for _ in 0..3 {
            adam.step(&mut p, Precision::Verify);
        }
        assert_eq!(p.expect("x").data(), &[1.25]);
        assert_eq!(adam.steps(), 3);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        for g in [3.0, -0.02] {
            let mut p = scalar_params(0.0);
            p.get_mut("x").unwrap().grad_mut()[0] = g;
            let mut adam = Adam::new(2e-4);
            adam.step(&mut p, Precision::Verify);
            // m̂ = g and v̂ = g², so the update is -lr·g/(|g| + ε).
            let expect = -2e-4 * g / (g.abs() + 1e-8);
            assert!((p.expect("x").data()[0] - expect).abs() < 1e-15);
            assert!((p.expect("x").data()[0] + 2e-4 * g.signum()).abs() < 1e-9);
            assert_eq!(p.expect("x").grad(), &[0.0]);
        }
    }

    #[test]
    fn zero_betas_reduce_to_rms_normalised_sgd() {
        let mut p = scalar_params(1.0);
        let mut adam = Adam::new(0.5).with_betas(0.0, 0.0);
        let mut x = 1.0;
        for g in [4.0, -0.5] {
            p.get_mut("x").unwrap().grad_mut()[0] = g;
            adam.step(&mut p, Precision::Verify);
            x -= 0.5 * g / ((g * g).sqrt() + 1e-8);
            assert!((p.expect("x").data()[0] - x).abs() < 1e-15);
        }
    }

    #[test]
    fn prefix_rates_override_the_default() {
        let mut p = scalar_params(0.0);
        p.insert("baseline.b", Tensor::vector(vec![0.0]));
        p.get_mut("x").unwrap().grad_mut()[0] = 1.0;
        p.get_mut("baseline.b").unwrap().grad_mut()[0] = 1.0;
        let mut adam = Adam::new(1e-4).with_rate_for("baseline.", 1e-2);
        assert_eq!(adam.rate_for("baseline.w"), 1e-2);
        assert_eq!(adam.rate_for("x"), 1e-4);
        adam.step(&mut p, Precision::Verify);
        assert!((p.expect("x").data()[0] + 1e-4).abs() < 1e-9);
        assert!((p.expect("baseline.b").data()[0] + 1e-2).abs() < 1e-9);
    }
}
