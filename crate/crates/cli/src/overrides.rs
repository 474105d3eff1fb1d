//! One `--flag` per training-config key, layered over a profile and an
//! optional config file. Flags win over the file, the file over the profile.

use std::path::{Path, PathBuf};

use clap::{Arg, ArgMatches, Command, FromArgMatches};
use tavst::train::{TrainConfig, CONFIG_KEYS};

fn describe(key: &str) -> &'static str {
    match key {
        "hidden" => "Hidden size H of every recurrent state",
        "batch" => "Albums per gradient step",
        "lr_warm" => "Learning rate of the topic and joint MLE stages",
        "lr_ft" => "Learning rate of RL fine-tuning",
        "lr_baseline" => "Learning rate of the reward baseline",
        "alpha_warm" => "RL weight during joint MLE training",
        "alpha_ft" => "RL weight during fine-tuning",
        "lambda1" => "Story weight against topic loss in the initial stage",
        "lambda2" => "Story weight against topic loss in each IU iteration",
        "beta" => "Weight of the initial stage against the IU iterations",
        "n_iter" => "Number of iterative-updating rounds",
        "beam" => "Beam size used for final generation",
        "reward" => "RL reward: meteor_lite, bleu4 or cider",
        "scope" => "Co-attention scope: per_image or global",
        "seed" => "Seed of every random choice in training",
        "epochs_topic" => "Epochs of topic-generator pretraining",
        "epochs_joint" => "Epochs of joint MLE training",
        "epochs_ft" => "Epochs of RL fine-tuning",
        "clip_norm" => "Gradient-norm bound during fine-tuning (0 disables)",
        "precision" => "Arithmetic precision: standard (f32 storage) or verify (f64)",
        "min_count" => "Minimum token count for a vocabulary entry",
        _ => "Training setting",
    }
}

pub fn flag_name(key: &str) -> String {
    key.replace('_', "-")
}

/// Training-config flags plus `--config` and `--profile`.
#[derive(Clone, Debug, Default)]
pub struct ConfigArgs {
    pub config: Option<PathBuf>,
    pub full_scale: bool,
    pub overrides: Vec<(&'static str, String)>,
}

impl ConfigArgs {
    /// Profile, then the config file, then flags; validated.
    pub fn resolve(&self) -> tavst::Result<TrainConfig> {
        let base = if self.full_scale { TrainConfig::default() } else { TrainConfig::desk() };
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path, base)?,
            None => base,
        };
        for (k, v) in &self.overrides {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn config_path(&self) -> Option<&Path> {
        self.config.as_deref()
    }
}

impl FromArgMatches for ConfigArgs {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut out = ConfigArgs {
            config: m.get_one::<PathBuf>("config").cloned(),
            full_scale: m.get_one::<String>("profile").is_some_and(|p| p == "full"),
            overrides: Vec::new(),
        };
        for key in CONFIG_KEYS {
            if let Some(v) = m.get_one::<String>(key) {
                out.overrides.push((key, v.clone()));
            }
        }
        Ok(out)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl clap::Args for ConfigArgs {
    fn augment_args(cmd: Command) -> Command {
        let desk = TrainConfig::desk();
        let mut cmd = cmd
            .arg(
                Arg::new("config")
                    .long("config")
                    .value_name("FILE")
                    .value_parser(clap::value_parser!(PathBuf))
                    .help("key=value training config; flags override it"),
            )
            .arg(
                Arg::new("profile")
                    .long("profile")
                    .value_name("PROFILE")
                    .value_parser(["desk", "full"])
                    .default_value("desk")
                    .help("Base values: desk (H=32, batch 8) or full (H=512, batch 64)"),
            );
        for key in CONFIG_KEYS {
            let default = desk.get(key).expect("every key is readable");
            cmd = cmd.arg(
                Arg::new(key)
                    .long(flag_name(key))
                    .value_name("VALUE")
                    .help(format!("{} [default: {default}]", describe(key))),
            );
        }
        cmd
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}
