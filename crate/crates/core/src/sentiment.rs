//! Lexicon-based sentence polarity and the story-level summaries built on it.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Label for albums whose event is unknown.
pub const OTHER_EVENT: &str = "other";

/// Word → ±1. Lookups are case-insensitive.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    polarity: HashMap<String, i8>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adding the same word twice with opposite polarity is an error.
    pub fn insert(&mut self, word: &str, polarity: i8) -> Result<()> {
        if polarity != 1 && polarity != -1 {
            return Err(Error::invalid(format!("polarity of {word:?} must be +1 or -1")));
        }
        let key = word.to_lowercase();
        match self.polarity.get(&key) {
            Some(&p) if p != polarity => Err(Error::invalid(format!("{word:?} is listed as both positive and negative"))),
            _ => {
                self.polarity.insert(key, polarity);
                Ok(())
            }
        }
    }

    pub fn polarity(&self, word: &str) -> i8 {
        self.polarity
            .get(word)
            .or_else(|| self.polarity.get(&word.to_lowercase()))
            .copied()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.polarity.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polarity.is_empty()
    }

    /// `word<TAB>positive|negative` per line; blank lines and `#` comments are skipped.
    pub fn parse_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut lex = Lexicon::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line: n + 1,
                message,
            };
            let (word, pol) = line
                .split_once('\t')
                .ok_or_else(|| parse_err("expected word<TAB>polarity".into()))?;
            let p = match pol.trim() {
                "positive" => 1,
                "negative" => -1,
                other => return Err(parse_err(format!("unknown polarity {other:?}"))),
            };
            lex.insert(word.trim(), p).map_err(|e| parse_err(e.to_string()))?;
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text, path)
    }
}

/// `sign(p − q)` for `p` positive and `q` negative hits.
pub fn sentence_score<S: AsRef<str>>(tokens: &[S], lex: &Lexicon) -> i8 {
    let net: i64 = tokens.iter().map(|t| lex.polarity(t.as_ref()) as i64).sum();
    net.signum() as i8
}

/// Population standard deviation.
pub fn in_story_divergence(scores: &[i8]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("divergence of an empty score vector"));
    }
    let n = scores.len() as f64;
    let mean = scores.iter().map(|&s| s as f64).sum::<f64>() / n;
    let var = scores.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt())
}

pub fn topic_story_score(scores: &[i8]) -> i32 {
    scores.iter().map(|&s| s as i32).sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorySentiment {
    pub scores: Vec<i8>,
    pub divergence: f64,
    pub total: i32,
}

pub fn analyze_story<S: AsRef<str>>(sentences: &[Vec<S>], lex: &Lexicon) -> Result<StorySentiment> {
    let scores: Vec<i8> = sentences.iter().map(|s| sentence_score(s, lex)).collect();
    Ok(StorySentiment {
        divergence: in_story_divergence(&scores)?,
        total: topic_story_score(&scores),
        scores,
    })
}

/// Per-event mean totals and the corpus mean divergence for one method.
#[derive(Clone, Debug, PartialEq)]
pub struct SentimentSummary {
    /// Event → (mean total, story count).
    pub events: BTreeMap<String, (f64, usize)>,
    pub mean_divergence: f64,
    pub stories: usize,
}

/// Groups stories by their album's event; albums missing from `labels` go to [`OTHER_EVENT`].
pub fn aggregate(stories: &[(String, StorySentiment)], labels: &BTreeMap<String, String>) -> Result<SentimentSummary> {
    if stories.is_empty() {
        return Err(Error::invalid("no stories to aggregate"));
    }
    let mut sums: BTreeMap<String, (i64, usize)> = BTreeMap::new();
    let mut div = 0.0;
    for (id, s) in stories {
        let event = labels.get(id).map_or(OTHER_EVENT, String::as_str);
        let e = sums.entry(event.to_string()).or_default();
        e.0 += s.total as i64;
        e.1 += 1;
        div += s.divergence;
    }
    Ok(SentimentSummary {
        events: sums.into_iter().map(|(k, (t, c))| (k, (t as f64 / c as f64, c))).collect(),
        mean_divergence: div / stories.len() as f64,
        stories: stories.len(),
    })
}

/// Methods as rows, events as columns; empty cells where a method has no story
/// for an event. Columns follow `event_order`, then any remaining events sorted.
pub fn event_table_csv(methods: &[(String, SentimentSummary)], event_order: &[String]) -> String {
    let mut columns: Vec<String> = Vec::new();
    for e in event_order {
        if !columns.contains(e) {
            columns.push(e.clone());
        }
    }
    let mut rest: Vec<&String> = methods
        .iter()
        .flat_map(|(_, s)| s.events.keys())
        .filter(|e| !columns.contains(e))
        .collect();
    rest.sort();
    rest.dedup();
    columns.extend(rest.into_iter().cloned());

    let mut out = String::from("method");
    for c in &columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (name, s) in methods {
        out.push_str(name);
        for c in &columns {
            out.push(',');
            if let Some((mean, _)) = s.events.get(c) {
                let _ = write!(out, "{mean:.4}");
            }
        }
        out.push('\n');
    }
    out
}

/// `method,mean_divergence,stories` rows.
pub fn divergence_csv(methods: &[(String, SentimentSummary)]) -> String {
    let mut out = String::from("method,mean_divergence,stories\n");
    for (name, s) in methods {
        let _ = writeln!(out, "{name},{:.4},{}", s.mean_divergence, s.stories);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> Lexicon {
        let mut l = Lexicon::new();
        for w in ["great", "fun", "happy"] {
            l.insert(w, 1).unwrap();
        }
        for w in ["sad", "terrible"] {
            l.insert(w, -1).unwrap();
        }
        l
    }

    fn s(text: &str) -> Vec<&str> {
        text.split_whitespace().collect()
    }

    #[test]
    fn sentence_examples() {
        let l = lex();
        assert_eq!(sentence_score(&s("we went home"), &l), 0);
        assert_eq!(sentence_score(&s("great fun day"), &l), 1);
        assert_eq!(sentence_score(&s("great but sad"), &l), 0);
        assert_eq!(sentence_score(&s("a Terrible day"), &l), -1);
    }

    #[test]
    fn divergence_examples() {
        assert_eq!(in_story_divergence(&[1, 1, 1, 1, 1]).unwrap(), 0.0);
        assert!((in_story_divergence(&[1, 1, 0, -1, -1]).unwrap() - 0.8f64.sqrt()).abs() < 1e-15);
        assert_eq!(in_story_divergence(&[1, -1]).unwrap(), 1.0);
        assert!(in_story_divergence(&[]).is_err());
    }

    #[test]
    fn totals_and_group_means() {
        assert_eq!(topic_story_score(&[0, 0, 0, 0, 0]), 0);
        assert_eq!(topic_story_score(&[1, 1, 1, 0, 0]), 3);
        let story = |total: i32| StorySentiment {
            scores: vec![],
            divergence: 0.5,
            total,
        };
        let labels: BTreeMap<String, String> = [("a", "party"), ("b", "party")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let sum = aggregate(&[("a".into(), story(3)), ("b".into(), story(1)), ("z".into(), story(-2))], &labels).unwrap();
        assert_eq!(sum.events["party"], (2.0, 2));
        assert_eq!(sum.events[OTHER_EVENT], (-2.0, 1));
        assert_eq!(sum.mean_divergence, 0.5);
    }

    #[test]
    fn lexicon_file_parsing() {
        let p = Path::new("lex.tsv");
        let l = Lexicon::parse_tsv("# c\nGood\tpositive\n\nbad\tnegative\n", p).unwrap();
        assert_eq!((l.polarity("good"), l.polarity("BAD"), l.len()), (1, -1, 2));
        assert!(Lexicon::parse_tsv("x\tpositive\nx\tnegative\n", p).is_err());
        let err = Lexicon::parse_tsv("ok\tpositive\nbroken\n", p).unwrap_err();
        assert!(err.to_string().contains('2'), "{err}");
    }

    #[test]
    fn table_layout() {
        let mk = |pairs: &[(&str, f64)]| SentimentSummary {
            events: pairs.iter().map(|(e, v)| (e.to_string(), (*v, 1))).collect(),
            mean_divergence: 0.0,
            stories: pairs.len(),
        };
        let t = event_table_csv(
            &[("GT".into(), mk(&[("b", 1.0), ("a", 2.0)])), ("M".into(), mk(&[("a", 0.5), ("c", -1.0)]))],
            &["b".into()],
        );
        assert_eq!(t, "method,b,a,c\nGT,1.0000,2.0000,\nM,,0.5000,-1.0000\n");
    }

    proptest! {
        #[test]
        fn score_ignores_token_order(mut words in proptest::collection::vec(prop::sample::select(vec!["great", "sad", "fun", "the", "terrible"]), 0..10)) {
            let l = lex();
            let a = sentence_score(&words, &l);
            words.reverse();
            prop_assert_eq!(a, sentence_score(&words, &l));
        }

        #[test]
        fn divergence_is_shift_invariant(v in proptest::collection::vec(-1i8..=1, 1..8), c in -1i8..=1) {
            let shifted: Vec<i8> = v.iter().map(|x| x + c).collect();
            prop_assert!((in_story_divergence(&v).unwrap() - in_story_divergence(&shifted).unwrap()).abs() < 1e-12);
            let constant = vec![c; v.len()];
            prop_assert_eq!(in_story_divergence(&constant).unwrap(), 0.0);
        }
    }
}
