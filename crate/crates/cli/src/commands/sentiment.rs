use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::anyhow;
use tavst::data::tokenize;
use tavst::sentiment::{aggregate, analyze_story, divergence_csv, event_table_csv, Lexicon};

use crate::jsonl::{read_entries, read_labels};
use crate::{print_resolved, CmdResult, Failure, OrFail};

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Story JSONL per method, as `NAME=PATH` or `PATH` (named after the file stem). Repeatable.
    #[arg(long, required = true)]
    stories: Vec<String>,
    /// TSV lexicon: `word<TAB>positive|negative`.
    #[arg(long)]
    lexicon: PathBuf,
    /// TSV event labels: `album_id<TAB>event`; unlabelled albums count as "other".
    #[arg(long)]
    events: Option<PathBuf>,
    /// Comma-separated leading event columns; remaining events follow alphabetically.
    #[arg(long, value_delimiter = ',')]
    event_order: Vec<String>,
}

fn method_spec(spec: &str) -> Result<(String, PathBuf), Failure> {
    if let Some((name, path)) = spec.split_once('=') {
        if name.is_empty() || path.is_empty() {
            return Err(Failure::invalid(anyhow!("--stories expects NAME=PATH, got {spec:?}")));
        }
        return Ok((name.to_string(), PathBuf::from(path)));
    }
    let path = PathBuf::from(spec);
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .ok_or_else(|| Failure::invalid(anyhow!("cannot name a method after {spec:?}")))?;
    Ok((name, path))
}

pub fn run(a: Args) -> CmdResult {
    let methods = a.stories.iter().map(|s| method_spec(s)).collect::<Result<Vec<_>, _>>()?;
    print_resolved(
        "analyze-sentiment",
        &[
            (
                "stories",
                methods
                    .iter()
                    .map(|(n, p)| format!("{n}={}", p.display()))
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("lexicon", a.lexicon.display().to_string()),
            ("events", a.events.as_ref().map_or("none".into(), |p| p.display().to_string())),
            ("event_order", a.event_order.join(",")),
        ],
    );
    let lexicon = Lexicon::load(&a.lexicon).or_invalid()?;
    let labels = match &a.events {
        Some(p) => read_labels(p).or_invalid()?,
        None => BTreeMap::new(),
    };
    let mut summaries = Vec::with_capacity(methods.len());
    for (name, path) in methods {
        let mut stories = Vec::new();
        for e in read_entries(&path).or_invalid()? {
            let sentences: Vec<Vec<String>> = e.sentences.iter().map(|s| tokenize(s)).collect();
            stories.push((e.id, analyze_story(&sentences, &lexicon).or_invalid()?));
        }
        summaries.push((name, aggregate(&stories, &labels).or_invalid()?));
    }
    print!("{}", divergence_csv(&summaries));
    println!();
    print!("{}", event_table_csv(&summaries, &a.event_order));
    Ok(())
}
