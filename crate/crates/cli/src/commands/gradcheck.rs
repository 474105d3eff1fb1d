use anyhow::anyhow;
use tavst::train::certify_gradients;

use crate::{print_resolved, CmdResult, Failure, OrFail};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Model size: `tiny` is one album, H=8, vocabularies under 30, verify precision.
    #[arg(long, default_value = "tiny", value_parser = ["tiny"])]
    config: String,
    #[arg(long, default_value_t = 2)]
    n_iter: usize,
    /// RL weight in the checked loss; above 0 the sampled plan is frozen and replayed.
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

pub fn run(a: Args) -> CmdResult {
    print_resolved(
        "gradcheck",
        &[
            ("config", a.config.clone()),
            ("n_iter", a.n_iter.to_string()),
            ("alpha", a.alpha.to_string()),
            ("seed", a.seed.to_string()),
        ],
    );
    if !(0.0..=1.0).contains(&a.alpha) {
        return Err(Failure::invalid(anyhow!("--alpha must lie in [0, 1], got {}", a.alpha)));
    }
    let report = certify_gradients(a.n_iter, a.alpha, a.seed).or_runtime()?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::runtime(anyhow!("gradient check exceeded tolerance {:e}", report.tol)))
    }
}
