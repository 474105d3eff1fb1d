//! `tavst`: synthesis, training, generation, evaluation, sentiment analysis,
//! gradient certification and hyperparameter sweeps.
//!
//! Exit codes: 0 success, 1 invalid input or arguments, 2 runtime failure.

mod commands;
mod jsonl;
mod overrides;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{eval, generate, gradcheck, sentiment, sweep, synth, train};

#[derive(Parser, Debug)]
#[command(name = "tavst", version, about = "Topic-aware visual storytelling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus (albums, features and event labels).
    Synth(synth::Args),
    /// Train a model on a corpus directory.
    Train(train::Args),
    /// Generate stories and topics for a corpus split.
    Generate(generate::Args),
    /// Score generated stories against references.
    Eval(eval::Args),
    /// Sentence polarity, in-story divergence and per-event sentiment tables.
    AnalyzeSentiment(sentiment::Args),
    /// Finite-difference check of the full training loss.
    Gradcheck(gradcheck::Args),
    /// Train every point of a hyperparameter grid and rank by validation METEOR-lite.
    Sweep(sweep::Args),
}

/// An error with the exit code it maps to.
pub struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl Failure {
    pub fn invalid(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 1, error: error.into() }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Self {
        Failure { code: 2, error: error.into() }
    }
}

impl fmt::Debug for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CmdResult = Result<(), Failure>;

/// Tags a result's error with an exit code.
pub trait OrFail<T> {
    fn or_invalid(self) -> Result<T, Failure>;
    fn or_runtime(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> OrFail<T> for Result<T, E> {
    fn or_invalid(self) -> Result<T, Failure> {
        self.map_err(Failure::invalid)
    }

    fn or_runtime(self) -> Result<T, Failure> {
        self.map_err(Failure::runtime)
    }
}

/// Prints `key=value` settings to standard error before a command acts.
pub fn print_resolved(title: &str, pairs: &[(&str, String)]) {
    eprintln!("# resolved {title}");
    for (k, v) in pairs {
        eprintln!("{k}={v}");
    }
}

/// The error chain joined by ": ", skipping causes an outer message already quotes.
fn message(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if out.contains(&text) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&text);
    }
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => synth::run(a),
        Command::Train(a) => train::run(a),
        Command::Generate(a) => generate::run(a),
        Command::Eval(a) => eval::run(a),
        Command::AnalyzeSentiment(a) => sentiment::run(a),
        Command::Gradcheck(a) => gradcheck::run(a),
        Command::Sweep(a) => sweep::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", message(&f.error));
            ExitCode::from(f.code)
        }
    }
}
