//! Documents, label sets, JSON-lines I/O, tokenization, splitting and the
//! synthetic obituary corpus.

mod document;
mod jsonl;
mod split;
pub mod synth;
mod vocab;

pub use document::{Document, LabelSet, Provenance, OBITUARY_CLASSES, OBITUARY_COUNTS};
pub use jsonl::{load_jsonl, parse_jsonl, write_jsonl, write_jsonl_to};
pub use split::{split, Dataset, DatasetPaths, SealedTruth, Split, SplitRatios};
pub use synth::{synth_corpus, SynthConfig, SynthCorpus};
pub use vocab::{tokenize, words, TokenizedBatch, Vocabulary, PAD, UNK};
