//! Annotated sentences: loading, validation, BIO encoding, fold splits,
//! statistics and deterministic synthetic corpora.

pub mod bio;
pub mod folds;
pub mod io;
pub mod record;
pub mod stats;
pub mod synth;

pub use bio::{
    decode_bio_strict, encode_bio, relation_heads, validate_bio, BioTag, EntityType, Span,
};
pub use folds::{load_folds, make_folds, split_validation, write_folds, FoldSplit};
pub use io::{load_corpus, write_corpus};
pub use record::SentenceRecord;
pub use stats::{corpus_stats, CorpusStats};
pub use synth::{synth_corpus, SynthConfig, START_TOKEN};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("directory not found: {0}")]
    MissingDirectory(String),
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("parse error in {file}: {reason}")]
    ParseFile { file: String, reason: String },
    #[error("record {id}: invalid BIO sequence at token {index}")]
    BioViolation { id: String, index: usize },
    #[error("record {id}: {reason}")]
    Invalid { id: String, reason: String },
    #[error("spans {first:?} and {second:?} overlap")]
    OverlappingSpans { first: (usize, usize), second: (usize, usize) },
    #[error("span [{start},{end}] out of bounds for {len} tokens")]
    SpanOutOfBounds { start: usize, end: usize, len: usize },
    #[error("cannot split {corpus} records into {n} folds")]
    BadFoldCount { n: usize, corpus: usize },
}
