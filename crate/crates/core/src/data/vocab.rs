use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

use super::Album;

pub type TokenId = usize;

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
const SPLIT_PUNCT: [char; 5] = ['.', ',', '!', '?', '\''];

/// Lowercases, splits on whitespace and splits off `. , ! ? '` as tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in text.split_whitespace() {
        let mut cur = String::new();
        for ch in word.chars().flat_map(char::to_lowercase) {
            if SPLIT_PUNCT.contains(&ch) {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                out.push(ch.to_string());
            } else {
                cur.push(ch);
            }
        }
        if !cur.is_empty() {
            out.push(cur);
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VocabSource {
    Titles,
    Stories,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    to_id: HashMap<String, TokenId>,
    to_token: Vec<String>,
    min_count: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from token frequencies in `albums`.
    ///
    /// Ids after the four specials are assigned by descending frequency, ties
    /// broken by token order. Tokens seen fewer than `min_count` times are left
    /// out and encode as [`UNK`].
    pub fn build(albums: &[Album], source: VocabSource, min_count: usize) -> Result<Self> {
        if albums.is_empty() {
            return Err(Error::invalid("cannot build a vocabulary from zero albums"));
        }
        if min_count == 0 {
            return Err(Error::invalid("min_count must be at least 1"));
        }
        let mut freq: BTreeMap<&str, usize> = BTreeMap::new();
        for album in albums {
            let lists: Box<dyn Iterator<Item = &Vec<String>>> = match source {
                VocabSource::Titles => Box::new(std::iter::once(&album.title)),
                VocabSource::Stories => Box::new(album.sentences.iter()),
            };
            for tok in lists.flatten() {
                *freq.entry(tok.as_str()).or_default() += 1;
            }
        }
        Ok(Self::from_counts(freq, min_count))
    }

    fn from_counts<'a>(freq: impl IntoIterator<Item = (&'a str, usize)>, min_count: usize) -> Self {
        let mut kept: Vec<(&str, usize)> = freq
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !SPECIALS.contains(t))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(kept.into_iter().map(|(t, _)| t.to_string()));
        let mut v = Self::from_tokens(tokens);
        v.min_count = min_count;
        v
    }

    /// Vocabulary whose id order is exactly `tokens`; the first four must be the specials.
    pub fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let to_token: Vec<String> = tokens.into_iter().collect();
        let to_id = to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            to_id,
            to_token,
            min_count: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_token.len() <= SPECIALS.len()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: TokenId) -> &str {
        self.to_token.get(id).map_or("<unk>", String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.to_token
    }

    pub fn is_special(id: TokenId) -> bool {
        id < SPECIALS.len() && id != UNK
    }

    /// `[BOS, ids..., EOS]` with at most `max_len - 1` content ids, so that the
    /// decoded part (content plus EOS) never exceeds `max_len`.
    pub fn encode(&self, tokens: &[String], max_len: usize) -> Vec<TokenId> {
        let keep = tokens.len().min(max_len.saturating_sub(1));
        let mut ids = Vec::with_capacity(keep + 2);
        ids.push(BOS);
        ids.extend(tokens[..keep].iter().map(|t| self.id(t)));
        ids.push(EOS);
        ids
    }

    /// Content ids only (no BOS), terminated by EOS.
    pub fn encode_target(&self, tokens: &[String], max_len: usize) -> Vec<TokenId> {
        let mut ids = self.encode(tokens, max_len);
        ids.remove(0);
        ids
    }

    /// Tokens for `ids` with PAD/BOS/EOS stripped; UNK decodes as `<unk>`.
    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter()
            .filter(|&&id| !Self::is_special(id))
            .map(|&id| self.token(id).to_string())
            .collect()
    }

    pub fn decode_string(&self, ids: &[TokenId]) -> String {
        self.decode(ids).join(" ")
    }

    /// One token per line in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_token.join("\n");
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`Vocabulary::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        if tokens.len() < SPECIALS.len() || tokens[..SPECIALS.len()] != SPECIALS {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("a vocabulary must start with {}", SPECIALS.join(", ")),
            });
        }
        let mut seen = std::collections::HashSet::new();
        for (n, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.contains(char::is_whitespace) || !seen.insert(t.as_str()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("bad or repeated token {t:?}"),
                });
            }
        }
        Ok(Self::from_tokens(tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.txt");
        let v = Vocabulary::from_tokens(SPECIALS.iter().map(|s| s.to_string()).chain(toks("sun beach")));
        v.save(&path).unwrap();
        assert_eq!(Vocabulary::load(&path).unwrap(), v);
        std::fs::write(&path, "sun\n").unwrap();
        assert!(Vocabulary::load(&path).is_err());
        std::fs::write(&path, "<pad>\n<bos>\n<eos>\n<unk>\nsun\nsun\n").unwrap();
        assert!(Vocabulary::load(&path).is_err());
    }

    fn album(title: &str, sentences: &[&str]) -> Album {
        Album {
            id: title.to_string(),
            features: vec![vec![0.0]; sentences.len()],
            sentences: sentences.iter().map(|s| toks(s)).collect(),
            title: toks(title),
        }
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(
            tokenize("We LOVED it, didn't we?!"),
            vec!["we", "loved", "it", ",", "didn", "'", "t", "we", "?", "!"]
        );
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn threshold_drops_rare_tokens() {
        let albums = vec![album("x", &["a a a a a b b"])];
        let v = Vocabulary::build(&albums, VocabSource::Stories, 3).unwrap();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("a"), 4);
        assert_eq!(v.id("b"), UNK);

        let albums = vec![album("x", &["a"])];
        let v = Vocabulary::build(&albums, VocabSource::Stories, 1).unwrap();
        assert_eq!(v.tokens()[4..], ["a"]);
    }

    #[test]
    fn frequency_ties_break_lexicographically() {
        let albums = vec![album("x", &["b a b a b a"])];
        let v = Vocabulary::build(&albums, VocabSource::Stories, 3).unwrap();
        assert!(v.id("a") < v.id("b"));
        assert_eq!(v.id("a"), 4);
    }

    #[test]
    fn specials_never_collide() {
        let albums = vec![album("<eos> <eos> <eos> fine", &["s"])];
        let v = Vocabulary::build(&albums, VocabSource::Titles, 1).unwrap();
        assert_eq!(v.id("<eos>"), EOS);
        assert_eq!(v.len(), 5);
    }

    #[test]
    fn empty_album_list_is_an_error() {
        assert!(Vocabulary::build(&[], VocabSource::Titles, 3).is_err());
    }

    #[test]
    fn encode_examples() {
        let v = Vocabulary::build(&[album("t", &["the cat sat"])], VocabSource::Stories, 1).unwrap();
        assert_eq!(v.encode(&[], 25), vec![BOS, EOS]);
        let s = toks("the cat sat");
        assert_eq!(v.decode(&v.encode(&s, 25)), s);
        let ids = v.encode(&toks("the dog sat"), 25);
        assert_eq!(ids[2], UNK);
        assert_eq!(v.encode(&toks("the cat sat"), 3), vec![BOS, v.id("the"), v.id("cat"), EOS]);
    }

    #[test]
    fn vocabulary_ignores_album_order() {
        let a = album("one two", &["x y z", "x"]);
        let b = album("two three", &["y y", "z q"]);
        let c = album("two", &["q x"]);
        let v1 = Vocabulary::build(&[a.clone(), b.clone(), c.clone()], VocabSource::Stories, 1).unwrap();
        let v2 = Vocabulary::build(&[c, a, b], VocabSource::Stories, 1).unwrap();
        assert_eq!(v1, v2);
    }

    proptest! {
        #[test]
        fn encode_decode_encode_is_stable(words in proptest::collection::vec("[a-e]{1,2}", 0..12)) {
            let v = Vocabulary::build(&[album("t", &["a b c aa bb"])], VocabSource::Stories, 1).unwrap();
            let once = v.encode(&words, 25);
            let again = v.encode(&v.decode(&once), 25);
            prop_assert_eq!(once, again);
        }

        #[test]
        fn decode_encode_decode_is_stable(ids in proptest::collection::vec(0usize..9, 0..12)) {
            let v = Vocabulary::build(&[album("t", &["a b c aa bb"])], VocabSource::Stories, 1).unwrap();
            let d = v.decode(&ids);
            prop_assert_eq!(v.decode(&v.encode(&d, 100)), d);
        }
    }
}
