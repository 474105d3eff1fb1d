use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::vocab::{tokenize, VocabSource, Vocabulary};

pub const FEATURES_MAGIC: &str = "TAVST-FEAT v1";

const SPLITS: [&str; 3] = ["train", "val", "test"];

/// One sample: an ordered image stream with a sentence per image and a title.
#[derive(Clone, Debug, PartialEq)]
pub struct Album {
    pub id: String,
    pub features: Vec<Vec<f64>>,
    pub sentences: Vec<Vec<String>>,
    pub title: Vec<String>,
}

impl Album {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn validate(&self, images_per_album: usize) -> Result<()> {
        let fail = |message: String| Error::Album {
            album: self.id.clone(),
            message,
        };
        if self.features.len() != images_per_album {
            return Err(fail(format!(
                "expected {images_per_album} images, found {}",
                self.features.len()
            )));
        }
        if self.sentences.len() != self.features.len() {
            return Err(fail(format!(
                "{} sentences for {} images",
                self.sentences.len(),
                self.features.len()
            )));
        }
        let d = self.feature_dim();
        if d == 0 || self.features.iter().any(|f| f.len() != d) {
            return Err(fail("feature vectors have inconsistent dimension".into()));
        }
        Ok(())
    }

    /// The N sub-stories joined into one token sequence.
    pub fn story_tokens(&self) -> Vec<String> {
        self.sentences.concat()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub train: Vec<Album>,
    pub val: Vec<Album>,
    pub test: Vec<Album>,
    pub story_vocab: Vocabulary,
    pub topic_vocab: Vocabulary,
    pub feature_dim: usize,
}

impl Corpus {
    /// Validates the splits and builds both vocabularies from the train split.
    pub fn from_splits(
        train: Vec<Album>,
        val: Vec<Album>,
        test: Vec<Album>,
        opts: &LoadOptions,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        let mut dim = None;
        for album in train.iter().chain(&val).chain(&test) {
            album.validate(opts.images_per_album)?;
            if !seen.insert(album.id.as_str()) {
                return Err(Error::Album {
                    album: album.id.clone(),
                    message: "album id appears more than once".into(),
                });
            }
            match dim {
                None => dim = Some(album.feature_dim()),
                Some(d) if d != album.feature_dim() => {
                    return Err(Error::Album {
                        album: album.id.clone(),
                        message: format!("feature dimension {} differs from {d}", album.feature_dim()),
                    })
                }
                _ => {}
            }
        }
        let story_vocab = Vocabulary::build(&train, VocabSource::Stories, opts.min_count)?;
        let topic_vocab = Vocabulary::build(&train, VocabSource::Titles, opts.min_count)?;
        Ok(Corpus {
            train,
            val,
            test,
            story_vocab,
            topic_vocab,
            feature_dim: dim.unwrap_or(0),
        })
    }

    pub fn split(&self, name: &str) -> Option<&[Album]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub images_per_album: usize,
    pub min_count: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            images_per_album: 5,
            min_count: 3,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct AlbumRecord {
    id: String,
    feature_ids: Vec<String>,
    sentences: Vec<String>,
    title: String,
}

/// Loads `albums.{train,val,test}.jsonl` and `features.bin` from `dir`.
pub fn load_corpus(dir: &Path, opts: &LoadOptions) -> Result<Corpus> {
    let features = read_features(&dir.join("features.bin"))?;
    let mut splits = Vec::new();
    for split in SPLITS {
        let path = dir.join(format!("albums.{split}.jsonl"));
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut albums = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(&path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: AlbumRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                path: path.clone(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
            let feats = rec
                .feature_ids
                .iter()
                .map(|fid| {
                    features.get(fid).cloned().ok_or_else(|| Error::Album {
                        album: rec.id.clone(),
                        message: format!("feature id {fid:?} not found in features.bin"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            albums.push(Album {
                id: rec.id,
                features: feats,
                sentences: rec.sentences.iter().map(|s| tokenize(s)).collect(),
                title: tokenize(&rec.title),
            });
        }
        splits.push(albums);
    }
    let test = splits.pop().unwrap();
    let val = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Corpus::from_splits(train, val, test, opts)
}

fn read_features(path: &Path) -> Result<HashMap<String, Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut header = Vec::new();
    r.read_until(b'\n', &mut header).map_err(|e| Error::io(path, e))?;
    if header.strip_suffix(b"\n") != Some(FEATURES_MAGIC.as_bytes()) {
        return Err(parse_err(1, format!("expected header {FEATURES_MAGIC:?}")));
    }
    let mut out = HashMap::new();
    let mut record = 0;
    loop {
        record += 1;
        let mut line = Vec::new();
        if r.read_until(b'\n', &mut line).map_err(|e| Error::io(path, e))? == 0 {
            break;
        }
        let text = String::from_utf8(line.strip_suffix(b"\n").unwrap_or(&line).to_vec())
            .map_err(|_| parse_err(record, "record header is not utf-8".into()))?;
        let (id, dim) = text
            .split_once('\t')
            .ok_or_else(|| parse_err(record, format!("malformed record header {text:?}")))?;
        let dim: usize = dim
            .parse()
            .map_err(|_| parse_err(record, format!("bad dimension in {text:?}")))?;
        let mut raw = vec![0u8; dim * 4];
        r.read_exact(&mut raw)
            .map_err(|_| parse_err(record, format!("truncated data for feature {id:?}")))?;
        let v = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        out.insert(id.to_string(), v);
    }
    Ok(out)
}

/// Writes `corpus` in the on-disk format read by [`load_corpus`].
pub fn write_corpus(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut feats = Vec::new();
    feats.extend_from_slice(FEATURES_MAGIC.as_bytes());
    feats.push(b'\n');
    for (split, albums) in SPLITS.iter().zip([&corpus.train, &corpus.val, &corpus.test]) {
        let path = dir.join(format!("albums.{split}.jsonl"));
        let mut out = Vec::new();
        for album in albums {
            let feature_ids: Vec<String> = (0..album.len()).map(|i| format!("{}_{i}", album.id)).collect();
            for (fid, f) in feature_ids.iter().zip(&album.features) {
                feats.extend_from_slice(format!("{fid}\t{}\n", f.len()).as_bytes());
                for &x in f {
                    feats.extend_from_slice(&(x as f32).to_le_bytes());
                }
            }
            let rec = AlbumRecord {
                id: album.id.clone(),
                feature_ids,
                sentences: album.sentences.iter().map(|s| s.join(" ")).collect(),
                title: album.title.join(" "),
            };
            serde_json::to_writer(&mut out, &rec).map_err(|e| Error::invalid(e.to_string()))?;
            out.push(b'\n');
        }
        std::fs::write(&path, out).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("features.bin");
    let mut f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    f.write_all(&feats).map_err(|e| Error::io(&path, e))
}
