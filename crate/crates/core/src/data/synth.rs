//! Deterministic synthetic albums for desk-scale experiments.
//!
//! Every album belongs to a topic class. Its title is the class's fixed phrase
//! and each sentence fills a position-specific template from the class's word
//! pools. Image features are the class centroid plus a per-position offset,
//! plus a signature vector for every word the sentence uses, plus Gaussian
//! noise. `noise` also sets the probability of picking a non-canonical pool
//! word, so at `noise = 0` all albums of a class are identical and stories are
//! a deterministic function of the class.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

use super::corpus::{Album, Corpus, LoadOptions};

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_albums: usize,
    pub feature_dim: usize,
    pub topic_classes: usize,
    pub noise: f64,
    pub images_per_album: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
    pub min_count: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            n_albums: 50,
            feature_dim: 64,
            topic_classes: 4,
            noise: 0.3,
            images_per_album: 5,
            val_fraction: 0.1,
            test_fraction: 0.1,
            min_count: 3,
        }
    }
}

struct Theme {
    name: String,
    title: Vec<String>,
    place: Vec<String>,
    noun: Vec<String>,
    adj: Vec<String>,
    who: Vec<String>,
    verb: Vec<String>,
    feeling: Vec<String>,
}

#[derive(Clone, Copy)]
enum Piece {
    Word(&'static str),
    Place,
    Noun,
    Adj,
    Who,
    Verb,
    Feeling,
}

use Piece::*;

/// Sentence templates, one per image position (cycled for longer albums).
const TEMPLATES: [&[Piece]; 5] = [
    &[Word("we"), Word("went"), Word("to"), Word("the"), Place, Word(".")],
    &[Word("the"), Noun, Word("was"), Adj, Word(".")],
    &[Who, Verb, Word("the"), Noun, Word(".")],
    &[Word("there"), Word("was"), Word("a"), Adj, Noun, Word("!")],
    &[Word("at"), Word("the"), Word("end"), Word("we"), Word("felt"), Feeling, Word(".")],
];

impl Theme {
    fn pool(&self, piece: Piece) -> &[String] {
        match piece {
            Word(_) => &[],
            Place => &self.place,
            Noun => &self.noun,
            Adj => &self.adj,
            Who => &self.who,
            Verb => &self.verb,
            Feeling => &self.feeling,
        }
    }
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn builtin_themes() -> Vec<Theme> {
    let t = |name: &str, title: &str, place: &str, noun: &str, adj: &str, who: &str, verb: &str, feeling: &str| Theme {
        name: name.to_string(),
        title: words(title),
        place: words(place),
        noun: words(noun),
        adj: words(adj),
        who: words(who),
        verb: words(verb),
        feeling: words(feeling),
    };
    vec![
        t("birthday", "birthday party", "house garden", "cake balloon gift", "great wonderful sweet", "mom grandma", "cut opened", "happy loved"),
        t("car_accident", "the car accident", "highway crossing", "wreck ambulance police", "terrible broken awful", "firemen medics", "towed inspected", "sad worried"),
        t("beach", "beach day out", "beach shore", "wave sand umbrella", "warm beautiful sunny", "kids dad", "built splashed", "relaxed glad"),
        t("breaking_up", "breaking up", "apartment cafe", "letter box ring", "lonely empty bitter", "she he", "packed returned", "hurt upset"),
        t("concert", "the rock concert", "stadium club", "band stage guitar", "loud amazing fantastic", "fans singer", "cheered played", "excited thrilled"),
        t("new_years_eve", "new years eve", "rooftop square", "fireworks countdown champagne", "bright joyful fun", "friends neighbors", "watched toasted", "cheerful delighted"),
        t("hiking", "mountain hike", "trail summit", "rock lake pine", "steep quiet fresh", "guide hikers", "climbed crossed", "tired proud"),
        t("graduation", "graduation day", "campus hall", "diploma gown cap", "proud formal nice", "students parents", "received threw", "grateful hopeful"),
    ]
}

fn pseudo_word(n: usize) -> String {
    const SYL: [&str; 12] = ["ka", "lo", "mi", "ru", "te", "no", "sa", "vi", "pe", "zu", "da", "fo"];
    let mut s = String::new();
    let mut x = n + SYL.len();
    while x > 0 {
        s.push_str(SYL[x % SYL.len()]);
        x /= SYL.len();
    }
    s
}

fn pseudo_theme(class: usize) -> Theme {
    let mut k = class * 64;
    let mut pool = |n: usize| -> Vec<String> {
        (0..n)
            .map(|_| {
                k += 1;
                pseudo_word(k)
            })
            .collect()
    };
    Theme {
        name: format!("class_{class}"),
        title: pool(2),
        place: pool(2),
        noun: pool(3),
        adj: pool(3),
        who: pool(2),
        verb: pool(2),
        feeling: pool(2),
    }
}

fn theme(class: usize) -> Theme {
    let mut themes = builtin_themes();
    if class < themes.len() {
        themes.swap_remove(class)
    } else {
        pseudo_theme(class)
    }
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| { let n: f64 = StandardNormal.sample(rng); scale * n })
        .collect::<Vec<f64>>()
}

/// Generates a corpus; see [`synth_with_labels`].
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Corpus> {
    synth_with_labels(cfg).map(|(c, _)| c)
}

/// Generates a corpus plus each album's topic class name (usable as an event label).
pub fn synth_with_labels(cfg: &SynthConfig) -> Result<(Corpus, BTreeMap<String, String>)> {
    if cfg.topic_classes < 2 {
        return Err(Error::invalid("synthetic corpora need at least 2 topic classes"));
    }
    if cfg.n_albums == 0 || cfg.feature_dim == 0 || cfg.images_per_album == 0 {
        return Err(Error::invalid("n_albums, feature_dim and images_per_album must be positive"));
    }
    if !(cfg.noise >= 0.0 && cfg.noise.is_finite()) {
        return Err(Error::invalid("noise must be a non-negative finite number"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.feature_dim;
    let themes: Vec<Theme> = (0..cfg.topic_classes).map(theme).collect();
    let centroids: Vec<Vec<f64>> = (0..cfg.topic_classes).map(|_| gaussian(&mut rng, dim, 1.0)).collect();
    let offsets: Vec<Vec<f64>> = (0..cfg.images_per_album).map(|_| gaussian(&mut rng, dim, 0.5)).collect();
    let mut signatures: HashMap<String, Vec<f64>> = HashMap::new();
    let word_prob = cfg.noise.min(1.0);

    let mut albums = Vec::with_capacity(cfg.n_albums);
    let mut labels = BTreeMap::new();
    for idx in 0..cfg.n_albums {
        let class = idx % cfg.topic_classes;
        let th = &themes[class];
        let mut features = Vec::with_capacity(cfg.images_per_album);
        let mut sentences = Vec::with_capacity(cfg.images_per_album);
        for pos in 0..cfg.images_per_album {
            let mut sentence = Vec::new();
            let mut feat: Vec<f64> = centroids[class].iter().zip(&offsets[pos]).map(|(c, o)| c + o).collect();
            for piece in TEMPLATES[pos % TEMPLATES.len()] {
                match *piece {
                    Word(w) => sentence.push(w.to_string()),
                    slot => {
                        let pool = th.pool(slot);
                        let w = if rng.random_bool(word_prob) {
                            pool[rng.random_range(0..pool.len())].clone()
                        } else {
                            pool[0].clone()
                        };
                        let sig = signatures
                            .entry(w.clone())
                            .or_insert_with(|| gaussian(&mut rng, dim, 0.5));
                        feat.iter_mut().zip(sig.iter()).for_each(|(f, s)| *f += s);
                        sentence.push(w);
                    }
                }
            }
            for f in feat.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut rng);
                // Stored as f32 on disk; keep in-memory values identical.
                *f = (*f + cfg.noise * n) as f32 as f64;
            }
            features.push(feat);
            sentences.push(sentence);
        }
        let id = format!("synth{:05}", idx);
        labels.insert(id.clone(), th.name.clone());
        albums.push(Album {
            id,
            features,
            sentences,
            title: th.title.clone(),
        });
    }

    albums.shuffle(&mut rng);
    let n_val = (cfg.n_albums as f64 * cfg.val_fraction).round() as usize;
    let n_test = (cfg.n_albums as f64 * cfg.test_fraction).round() as usize;
    if n_val + n_test >= cfg.n_albums {
        return Err(Error::invalid("validation and test fractions leave no training albums"));
    }
    let test = albums.split_off(cfg.n_albums - n_test);
    let val = albums.split_off(cfg.n_albums - n_test - n_val);
    let opts = LoadOptions {
        images_per_album: cfg.images_per_album,
        min_count: cfg.min_count,
    };
    Ok((Corpus::from_splits(albums, val, test, &opts)?, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn same_seed_gives_identical_files() {
        let cfg = SynthConfig {
            n_albums: 20,
            ..Default::default()
        };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        super::super::write_corpus(a.path(), &synth_corpus(&cfg).unwrap()).unwrap();
        super::super::write_corpus(b.path(), &synth_corpus(&cfg).unwrap()).unwrap();
        for f in ["albums.train.jsonl", "albums.val.jsonl", "albums.test.jsonl", "features.bin"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn both_classes_present() {
        let cfg = SynthConfig {
            n_albums: 8,
            topic_classes: 2,
            val_fraction: 0.0,
            test_fraction: 0.0,
            min_count: 1,
            ..Default::default()
        };
        let (c, labels) = synth_with_labels(&cfg).unwrap();
        assert_eq!(c.train.len(), 8);
        let titles: BTreeSet<_> = c.train.iter().map(|a| a.title.join(" ")).collect();
        assert_eq!(titles.len(), 2);
        assert_eq!(labels.values().collect::<BTreeSet<_>>().len(), 2);
    }

    #[test]
    fn titles_are_short_phrases() {
        for class in 0..12 {
            let n = theme(class).title.len();
            assert!((2..=4).contains(&n), "class {class}: {n}");
        }
    }

    #[test]
    fn rejects_single_class() {
        let cfg = SynthConfig {
            topic_classes: 1,
            ..Default::default()
        };
        assert!(synth_corpus(&cfg).is_err());
    }

    #[test]
    fn zero_noise_makes_class_members_identical() {
        let cfg = SynthConfig {
            n_albums: 12,
            topic_classes: 3,
            noise: 0.0,
            val_fraction: 0.0,
            test_fraction: 0.0,
            ..Default::default()
        };
        let c = synth_corpus(&cfg).unwrap();
        for a in &c.train {
            for b in &c.train {
                if a.title == b.title {
                    assert_eq!(a.features, b.features);
                    assert_eq!(a.sentences, b.sentences);
                }
            }
        }
    }
}
