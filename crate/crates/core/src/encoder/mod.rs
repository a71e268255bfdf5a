//! The text-encoder abstraction: frozen base token embeddings, trainable
//! dense head layers and pooling.

pub mod pooling;
pub mod source;
pub mod stack;

pub use pooling::{pool, pool_on_tape, PoolingMode};
pub use source::{
    load_sidecars, synth_embeddings, synth_embeddings_with, write_sidecars, EmbeddingSource,
    SourceMode, SynthEmbeddingOptions,
};
pub use stack::{ContextMixer, DenseLayer, EncoderStack};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("no embedding rows for record {0}")]
    MissingRecord(String),
    #[error("record {id}: embedding has {rows} rows for {tokens} tokens")]
    RowMismatch { id: String, rows: usize, tokens: usize },
    #[error("embedding dimension must be at least 2, got {0}")]
    BadDimension(usize),
    #[error("pooling over a fully masked input")]
    FullyMasked,
    #[error("embedding sidecar error: {0}")]
    Sidecar(String),
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}
