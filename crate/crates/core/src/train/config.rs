//! Training configuration as a flat `key=value` record.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::RewardKind;
use crate::model::CoattentionScope;
use crate::tensor::Precision;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub hidden: usize,
    pub batch: usize,
    pub lr_warm: f64,
    pub lr_ft: f64,
    /// Learning rate of the reward baseline regressor, in every stage.
    pub lr_baseline: f64,
    /// RL weight during joint warm-up.
    pub alpha_warm: f64,
    /// RL weight during fine-tuning.
    pub alpha_ft: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub beta: f64,
    pub n_iter: usize,
    pub beam: usize,
    pub reward: RewardKind,
    pub scope: CoattentionScope,
    pub seed: u64,
    pub epochs_topic: usize,
    pub epochs_joint: usize,
    pub epochs_ft: usize,
    /// Global gradient-norm bound during fine-tuning; 0 disables clipping.
    pub clip_norm: f64,
    pub precision: Precision,
    pub min_count: usize,
}

impl Default for TrainConfig {
    /// Full-scale values.
    fn default() -> Self {
        TrainConfig {
            hidden: 512,
            batch: 64,
            lr_warm: 2e-4,
            lr_ft: 2e-5,
            lr_baseline: 1e-3,
            alpha_warm: 0.0,
            alpha_ft: 0.8,
            lambda1: 0.7,
            lambda2: 0.7,
            beta: 0.3,
            n_iter: 2,
            beam: 3,
            reward: RewardKind::MeteorLite,
            scope: CoattentionScope::PerImage,
            seed: 7,
            epochs_topic: 5,
            epochs_joint: 30,
            epochs_ft: 10,
            clip_norm: 5.0,
            precision: Precision::Standard,
            min_count: 3,
        }
    }
}

pub const KEYS: [&str; 21] = [
    "hidden",
    "batch",
    "lr_warm",
    "lr_ft",
    "lr_baseline",
    "alpha_warm",
    "alpha_ft",
    "lambda1",
    "lambda2",
    "beta",
    "n_iter",
    "beam",
    "reward",
    "scope",
    "seed",
    "epochs_topic",
    "epochs_joint",
    "epochs_ft",
    "clip_norm",
    "precision",
    "min_count",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value {value:?} for {key}")))
}

impl TrainConfig {
    /// Desk-scale profile: small hidden size and batch.
    pub fn desk() -> Self {
        TrainConfig {
            hidden: 32,
            batch: 8,
            ..Default::default()
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "hidden" => self.hidden = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "lr_warm" => self.lr_warm = parse(key, value)?,
            "lr_ft" => self.lr_ft = parse(key, value)?,
            "lr_baseline" => self.lr_baseline = parse(key, value)?,
            "alpha_warm" => self.alpha_warm = parse(key, value)?,
            "alpha_ft" | "alpha" => self.alpha_ft = parse(key, value)?,
            "lambda1" => self.lambda1 = parse(key, value)?,
            "lambda2" => self.lambda2 = parse(key, value)?,
            "beta" => self.beta = parse(key, value)?,
            "n_iter" => self.n_iter = parse(key, value)?,
            "beam" => self.beam = parse(key, value)?,
            "reward" => self.reward = value.trim().parse()?,
            "scope" => self.scope = value.trim().parse()?,
            "seed" => self.seed = parse(key, value)?,
            "epochs_topic" => self.epochs_topic = parse(key, value)?,
            "epochs_joint" => self.epochs_joint = parse(key, value)?,
            "epochs_ft" => self.epochs_ft = parse(key, value)?,
            "clip_norm" => self.clip_norm = parse(key, value)?,
            "precision" => {
                self.precision = match value.trim() {
                    "standard" => Precision::Standard,
                    "verify" => Precision::Verify,
                    v => return Err(Error::invalid(format!("bad precision {v:?} (standard|verify)"))),
                }
            }
            "min_count" => self.min_count = parse(key, value)?,
            _ => return Err(Error::invalid(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "hidden" => self.hidden.to_string(),
            "batch" => self.batch.to_string(),
            "lr_warm" => self.lr_warm.to_string(),
            "lr_ft" => self.lr_ft.to_string(),
            "lr_baseline" => self.lr_baseline.to_string(),
            "alpha_warm" => self.alpha_warm.to_string(),
            "alpha_ft" => self.alpha_ft.to_string(),
            "lambda1" => self.lambda1.to_string(),
            "lambda2" => self.lambda2.to_string(),
            "beta" => self.beta.to_string(),
            "n_iter" => self.n_iter.to_string(),
            "beam" => self.beam.to_string(),
            "reward" => self.reward.to_string(),
            "scope" => self.scope.to_string(),
            "seed" => self.seed.to_string(),
            "epochs_topic" => self.epochs_topic.to_string(),
            "epochs_joint" => self.epochs_joint.to_string(),
            "epochs_ft" => self.epochs_ft.to_string(),
            "clip_norm" => self.clip_norm.to_string(),
            "precision" => match self.precision {
                Precision::Standard => "standard".into(),
                Precision::Verify => "verify".into(),
            },
            "min_count" => self.min_count.to_string(),
            _ => return None,
        })
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            };
            let (k, v) = line.split_once('=').ok_or_else(|| err("expected key=value".into()))?;
            self.set(k.trim(), v).map_err(|e| err(e.to_string()))?;
        }
        Ok(())
    }

    pub fn load(path: &Path, base: TrainConfig) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = base;
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for k in KEYS {
            let _ = writeln!(out, "{k}={}", self.get(k).expect("every key is readable"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("alpha_warm", self.alpha_warm),
            ("alpha_ft", self.alpha_ft),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("beta", self.beta),
        ] {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {w}")));
            }
        }
        for (name, v) in [("hidden", self.hidden), ("batch", self.batch), ("beam", self.beam), ("min_count", self.min_count)] {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        for (name, lr) in [("lr_warm", self.lr_warm), ("lr_ft", self.lr_ft), ("lr_baseline", self.lr_baseline)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::invalid(format!("{name} must be a positive number")));
            }
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::invalid("clip_norm must be a non-negative number"));
        }
        Ok(())
    }
}
