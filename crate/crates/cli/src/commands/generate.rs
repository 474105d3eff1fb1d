use std::io::Write as _;
use std::path::PathBuf;

use anyhow::{anyhow, Context};
use serde::Serialize;
use tavst::data::{load_corpus, LoadOptions, Vocabulary};
use tavst::model::ModelDims;
use tavst::train::{generate, generate_options, TrainConfig};
use tavst::ModelParams;

use super::train::{BEST_CKPT, CONFIG_FILE, LAST_CKPT, STORY_VOCAB, TOPIC_VOCAB};
use crate::jsonl::StoryRecord;
use crate::{print_resolved, CmdResult, Failure, OrFail};

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Checkpoint {
    Best,
    Last,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Corpus directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
    split: String,
    /// Story beam width; 1 decodes greedily.
    #[arg(long, default_value_t = 3)]
    beam_size: usize,
    #[arg(long, value_enum, default_value_t = Checkpoint::Best)]
    checkpoint: Checkpoint,
    /// Output JSONL; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Writes per-stage co-attention weights as JSONL.
    #[arg(long)]
    dump_attention: Option<PathBuf>,
    /// Images per album N.
    #[arg(long, default_value_t = 5)]
    images: usize,
}

#[derive(Serialize)]
struct AttentionRecord<'a> {
    id: &'a str,
    stage: usize,
    attn_v: &'a [Vec<f64>],
    attn_t: &'a [Vec<f64>],
}

fn create(path: &PathBuf) -> Result<Box<dyn std::io::Write>, Failure> {
    let f = std::fs::File::create(path)
        .with_context(|| format!("cannot create {}", path.display()))
        .or_runtime()?;
    Ok(Box::new(std::io::BufWriter::new(f)))
}

pub fn run(a: Args) -> CmdResult {
    if a.beam_size == 0 {
        return Err(Failure::invalid(anyhow!("--beam-size must be at least 1")));
    }
    let cfg = TrainConfig::load(&a.run.join(CONFIG_FILE), TrainConfig::desk()).or_invalid()?;
    let ckpt = a.run.join(match a.checkpoint {
        Checkpoint::Best => BEST_CKPT,
        Checkpoint::Last => LAST_CKPT,
    });
    print_resolved(
        "generate",
        &[
            ("run", a.run.display().to_string()),
            ("data", a.data.display().to_string()),
            ("split", a.split.clone()),
            ("beam_size", a.beam_size.to_string()),
            ("checkpoint", ckpt.display().to_string()),
            ("n_iter", cfg.n_iter.to_string()),
            ("scope", cfg.get("scope").unwrap_or_default()),
            ("precision", cfg.get("precision").unwrap_or_default()),
        ],
    );
    let params = ModelParams::load(&ckpt).or_invalid()?;
    let story_vocab = Vocabulary::load(&a.run.join(STORY_VOCAB)).or_invalid()?;
    let topic_vocab = Vocabulary::load(&a.run.join(TOPIC_VOCAB)).or_invalid()?;
    let dims = ModelDims::infer(&params).or_invalid()?;
    if dims.story_vocab != story_vocab.len() || dims.topic_vocab != topic_vocab.len() {
        return Err(Failure::invalid(anyhow!(
            "checkpoint vocabularies ({}, {}) do not match the run's vocabulary files ({}, {})",
            dims.story_vocab,
            dims.topic_vocab,
            story_vocab.len(),
            topic_vocab.len()
        )));
    }
    let corpus = load_corpus(
        &a.data,
        &LoadOptions {
            images_per_album: a.images,
            min_count: cfg.min_count,
        },
    )
    .or_invalid()?;
    let albums = corpus.split(&a.split).expect("split names are validated by clap");
    if !albums.is_empty() && (corpus.feature_dim != dims.feature_dim || a.images != dims.images_per_album) {
        return Err(Failure::invalid(anyhow!(
            "corpus has {} images of dimension {} but the model expects {} of dimension {}",
            a.images,
            corpus.feature_dim,
            dims.images_per_album,
            dims.feature_dim
        )));
    }

    let opts = generate_options(&cfg, a.beam_size);
    let mut out: Box<dyn std::io::Write> = match &a.out {
        Some(p) => create(p)?,
        None => Box::new(std::io::stdout().lock()),
    };
    let mut attn_out = a.dump_attention.as_ref().map(create).transpose()?;
    for album in albums {
        let gen = generate(&params, &album.features, &opts).or_runtime()?;
        let rec = StoryRecord {
            id: album.id.clone(),
            story: gen.story.iter().map(|s| story_vocab.decode_string(s)).collect(),
            topic: topic_vocab.decode_string(gen.topic()),
        };
        writeln!(out, "{}", serde_json::to_string(&rec).or_runtime()?).or_runtime()?;
        if let Some(w) = attn_out.as_mut() {
            for (stage, att) in gen.attention.iter().enumerate() {
                let rec = AttentionRecord {
                    id: &album.id,
                    stage,
                    attn_v: &att.attn_v,
                    attn_t: &att.attn_t,
                };
                writeln!(w, "{}", serde_json::to_string(&rec).or_runtime()?).or_runtime()?;
            }
        }
    }
    out.flush().or_runtime()?;
    if let Some(mut w) = attn_out {
        w.flush().or_runtime()?;
    }
    log::info!("generated {} albums from the {} split", albums.len(), a.split);
    Ok(())
}
