//! Albums, vocabularies and corpus files.

mod corpus;
mod synth;
mod vocab;

pub use corpus::{load_corpus, write_corpus, Album, Corpus, LoadOptions, FEATURES_MAGIC};
pub use synth::{synth_corpus, synth_with_labels, SynthConfig};
pub use vocab::{tokenize, TokenId, VocabSource, Vocabulary, BOS, EOS, PAD, UNK};

/// Maximum number of decoded tokens in a sub-story, EOS included.
pub const MAX_SENTENCE_LEN: usize = 25;
/// Maximum number of decoded tokens in a topic description, EOS included.
pub const MAX_TITLE_LEN: usize = 20;
