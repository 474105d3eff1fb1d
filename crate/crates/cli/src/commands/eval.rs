use std::path::PathBuf;

use anyhow::anyhow;
use tavst::data::tokenize;
use tavst::metrics::{evaluate, meteor_corpus, MeteorAggregation};

use crate::jsonl::{group_by_id, read_entries, Entry};
use crate::{print_resolved, CmdResult, Failure, OrFail};

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Target {
    /// Concatenated sub-stories.
    Story,
    /// Topic descriptions against titles.
    Topic,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Meteor {
    /// Mean of per-story scores.
    Sentence,
    /// One score from summed matches and chunks.
    Corpus,
}

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Hypotheses: JSONL {"id", "story", "topic"}.
    #[arg(long)]
    hyp: PathBuf,
    /// References: story records or corpus album records; repeated ids add references.
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, value_enum, default_value_t = Target::Story)]
    target: Target,
    #[arg(long, value_enum, default_value_t = Meteor::Sentence)]
    meteor: Meteor,
}

fn text_of(e: &Entry, target: Target) -> Result<Vec<String>, Failure> {
    match target {
        Target::Story => Ok(e.sentences.iter().flat_map(|s| tokenize(s)).collect()),
        Target::Topic => e
            .topic
            .as_deref()
            .map(tokenize)
            .ok_or_else(|| Failure::invalid(anyhow!("album {} has no topic or title", e.id))),
    }
}

pub fn run(a: Args) -> CmdResult {
    print_resolved(
        "eval",
        &[
            ("hyp", a.hyp.display().to_string()),
            ("ref", a.reference.display().to_string()),
            ("target", format!("{:?}", a.target).to_lowercase()),
            ("meteor", format!("{:?}", a.meteor).to_lowercase()),
        ],
    );
    let hyps = read_entries(&a.hyp).or_invalid()?;
    let refs = group_by_id(read_entries(&a.reference).or_invalid()?);
    let mut hyp_tokens = Vec::with_capacity(hyps.len());
    let mut ref_tokens = Vec::with_capacity(hyps.len());
    for h in &hyps {
        let r = refs
            .get(&h.id)
            .ok_or_else(|| Failure::invalid(anyhow!("no reference for album {}", h.id)))?;
        hyp_tokens.push(text_of(h, a.target)?);
        ref_tokens.push(r.iter().map(|e| text_of(e, a.target)).collect::<Result<Vec<_>, _>>()?);
    }
    let mut report = evaluate(&hyp_tokens, &ref_tokens).or_invalid()?;
    if a.meteor == Meteor::Corpus {
        report.meteor_lite = meteor_corpus(&hyp_tokens, &ref_tokens, MeteorAggregation::Corpus).or_invalid()?;
    }
    log::info!("scored {} hypotheses", hyps.len());
    print!("{report}");
    print!("{}", report.to_kv());
    Ok(())
}
