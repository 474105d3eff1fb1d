//! JSONL records exchanged between subcommands.
//!
//! Generated stories: `{"id", "story": [str; N], "topic": str}`. Story and
//! reference readers also accept corpus album records (`sentences`, `title`),
//! so a corpus split can serve directly as references.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
pub struct StoryRecord {
    pub id: String,
    pub story: Vec<String>,
    pub topic: String,
}

#[derive(Debug, Deserialize)]
struct AnyRecord {
    id: String,
    #[serde(default)]
    story: Option<Vec<String>>,
    #[serde(default)]
    sentences: Option<Vec<String>>,
    #[serde(default)]
    topic: Option<String>,
    #[serde(default)]
    title: Option<String>,
}

/// Sentences and topic of one album, from either record kind.
#[derive(Clone, Debug)]
pub struct Entry {
    pub id: String,
    pub sentences: Vec<String>,
    pub topic: Option<String>,
}

pub fn read_entries(path: &Path) -> Result<Vec<Entry>> {
    let file = std::fs::File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.with_context(|| format!("{}: read failed", path.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: AnyRecord =
            serde_json::from_str(&line).with_context(|| format!("{}:{}: malformed record", path.display(), n + 1))?;
        let sentences = rec
            .story
            .or(rec.sentences)
            .ok_or_else(|| anyhow!("{}:{}: record has neither \"story\" nor \"sentences\"", path.display(), n + 1))?;
        out.push(Entry {
            id: rec.id,
            sentences,
            topic: rec.topic.or(rec.title),
        });
    }
    Ok(out)
}

/// Entries grouped by id; repeated ids become multiple references.
pub fn group_by_id(entries: Vec<Entry>) -> BTreeMap<String, Vec<Entry>> {
    let mut out: BTreeMap<String, Vec<Entry>> = BTreeMap::new();
    for e in entries {
        out.entry(e.id.clone()).or_default().push(e);
    }
    out
}

/// `id<TAB>label` lines; blank lines and `#` comments are skipped.
pub fn read_labels(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (id, label) = line
            .split_once('\t')
            .ok_or_else(|| anyhow!("{}:{}: expected id<TAB>label", path.display(), n + 1))?;
        if out.insert(id.trim().to_string(), label.trim().to_string()).is_some() {
            return Err(anyhow!("{}:{}: album {} labelled twice", path.display(), n + 1, id.trim()));
        }
    }
    Ok(out)
}
