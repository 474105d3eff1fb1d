use std::fmt::Write as _;
use std::path::PathBuf;

use tavst::data::{load_corpus, LoadOptions};
use tavst::train::{history_csv, train, TrainConfig};

use super::{create_dir, write_file};
use crate::overrides::ConfigArgs;
use crate::{CmdResult, OrFail};

/// Files of a run directory.
pub const CONFIG_FILE: &str = "config.txt";
pub const BEST_CKPT: &str = "best.ckpt";
pub const LAST_CKPT: &str = "last.ckpt";
pub const STORY_VOCAB: &str = "vocab.story.txt";
pub const TOPIC_VOCAB: &str = "vocab.topic.txt";
pub const HISTORY: &str = "history.csv";
pub const SUMMARY: &str = "summary.txt";

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Corpus directory (albums.{train,val,test}.jsonl and features.bin).
    #[arg(long)]
    data: PathBuf,
    /// Run directory for checkpoints, vocabularies, history and summary.
    #[arg(long)]
    out: PathBuf,
    /// Images per album N.
    #[arg(long, default_value_t = 5)]
    images: usize,
    #[command(flatten)]
    config: ConfigArgs,
}

fn fmt_val(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"))
}

pub fn run(a: Args) -> CmdResult {
    let cfg: TrainConfig = a.config.resolve().or_invalid()?;
    eprintln!("# resolved train");
    eprintln!("data={}", a.data.display());
    eprintln!("out={}", a.out.display());
    eprintln!("images={}", a.images);
    if let Some(p) = a.config.config_path() {
        eprintln!("config_file={}", p.display());
    }
    eprint!("{}", cfg.to_text());
    let opts = LoadOptions {
        images_per_album: a.images,
        min_count: cfg.min_count,
    };
    let corpus = load_corpus(&a.data, &opts).or_invalid()?;
    log::info!(
        "corpus: {} train / {} val albums, story vocab {}, topic vocab {}",
        corpus.train.len(),
        corpus.val.len(),
        corpus.story_vocab.len(),
        corpus.topic_vocab.len()
    );
    create_dir(&a.out)?;
    write_file(&a.out.join(CONFIG_FILE), &cfg.to_text())?;
    corpus.story_vocab.save(&a.out.join(STORY_VOCAB)).or_runtime()?;
    corpus.topic_vocab.save(&a.out.join(TOPIC_VOCAB)).or_runtime()?;

    let out = train(&corpus, &cfg, &mut |_, _| {}).or_runtime()?;

    out.best.save(&a.out.join(BEST_CKPT)).or_runtime()?;
    out.last.save(&a.out.join(LAST_CKPT)).or_runtime()?;
    write_file(&a.out.join(HISTORY), &history_csv(&out.history))?;
    let mut summary = String::new();
    let _ = writeln!(summary, "best_val_meteor={}", fmt_val(out.best_val));
    for end in &out.stage_ends {
        let _ = writeln!(summary, "stage{}_val_meteor={}", end.stage as u8, fmt_val(end.val_meteor));
    }
    write_file(&a.out.join(SUMMARY), &summary)?;
    print!("{summary}");
    Ok(())
}
