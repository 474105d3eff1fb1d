//! Central finite-difference certification of analytic gradients.

use std::fmt;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::params::{Gradients, ModelParams};
use crate::tensor::Precision;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    pub tol: f64,
    /// Tensors with more entries than this are checked on a random subset of
    /// this many coordinates (never fewer than 64).
    pub max_coords_per_tensor: usize,
    pub seed: u64,
    pub precision: Precision,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-5,
            tol: 1e-4,
            max_coords_per_tensor: usize::MAX,
            seed: 0,
            precision: Precision::Verify,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub coords_checked: usize,
    pub numel: usize,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub loss: f64,
    pub tol: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.rel_error <= self.tol)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error))
    }

    pub fn coords_checked(&self) -> usize {
        self.tensors.iter().map(|t| t.coords_checked).sum()
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "loss = {:.12}", self.loss)?;
        writeln!(
            f,
            "{:<28} {:>8} {:>8} {:>14} {:>14} {:>10}",
            "tensor", "checked", "worst", "analytic", "numeric", "rel.err"
        )?;
        for t in &self.tensors {
            writeln!(
                f,
                "{:<28} {:>8} {:>8} {:>14.6e} {:>14.6e} {:>10.2e}{}",
                t.name,
                t.coords_checked,
                t.worst_index,
                t.analytic,
                t.numeric,
                t.rel_error,
                if t.rel_error <= self.tol { "" } else { "  FAIL" }
            )?;
        }
        write!(
            f,
            "{} ({} coordinates, tol {:.0e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.coords_checked(),
            self.tol
        )
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares the analytic gradient returned by `f` with central differences
/// of the loss it returns, over the tensors of `params`.
///
/// `f` must be a deterministic function of the parameter values.
pub fn grad_check<F>(params: &ModelParams, f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&ModelParams) -> Result<(f64, Gradients)> + Sync,
{
    if opts.precision != Precision::Verify {
        return Err(Error::invalid("gradient checks require verify precision"));
    }
    let (loss, grads) = f(params)?;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss at the unperturbed point".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let limit = opts.max_coords_per_tensor.max(64);
    let mut tensors = Vec::new();
    for (name, t) in params.iter() {
        let n = t.numel();
        let coords: Vec<usize> = if n <= limit {
            (0..n).collect()
        } else {
            let mut c = sample(&mut rng, n, limit).into_vec();
            c.sort_unstable();
            c
        };
        let analytic_all = grads.get(name);
        let results: Vec<Result<(usize, f64, f64)>> = coords
            .par_iter()
            .map(|&i| {
                let numeric = central_difference(params, &f, name, i, opts.eps)?;
                let analytic = analytic_all.map_or(0.0, |g| g[i]);
                Ok((i, analytic, numeric))
            })
            .collect();
        let mut worst = TensorCheck {
            name: name.to_string(),
            coords_checked: coords.len(),
            numel: n,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
            rel_error: -1.0,
        };
        for r in results {
            let (i, a, nmr) = r?;
            let e = relative_error(a, nmr);
            if e > worst.rel_error {
                worst.worst_index = i;
                worst.analytic = a;
                worst.numeric = nmr;
                worst.rel_error = e;
            }
        }
        worst.rel_error = worst.rel_error.max(0.0);
        tensors.push(worst);
    }
    Ok(GradCheckReport {
        loss,
        tol: opts.tol,
        tensors,
    })
}

fn central_difference<F>(params: &ModelParams, f: &F, name: &str, i: usize, eps: f64) -> Result<f64>
where
    F: Fn(&ModelParams) -> Result<(f64, Gradients)>,
{
    let mut p = params.clone();
    let orig = p.expect(name).data()[i];
    p.get_mut(name).unwrap().data_mut()[i] = orig + eps;
    let (plus, _) = f(&p)?;
    p.get_mut(name).unwrap().data_mut()[i] = orig - eps;
    let (minus, _) = f(&p)?;
    if !plus.is_finite() || !minus.is_finite() {
        return Err(Error::NonFinite(format!("loss with {name}[{i}] perturbed")));
    }
    Ok((plus - minus) / (2.0 * eps))
}
