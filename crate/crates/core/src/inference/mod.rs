//! Inference over learned spaces: representation extraction, exact KNN
//! classification, and the intermediate evaluation protocols.

pub mod checks;
pub mod extract;
pub mod knn;
pub mod space;

pub use checks::{linear_probe, similarity_check, ProbeOptions, ProbeReport};
pub use extract::{
    entity_space_from, extract_entity_reps, extract_relation_reps, relation_space_from,
    CandidateRep, ExtractionMode, TokenRep,
};
pub use knn::{knn_classify, knn_f1, select_k, KnnConfig, KnnMetric, DEFAULT_K_GRID};
pub use space::{load_space, write_space, SpaceKind, SpaceLabel, TrainedSpace};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("space error: {0}")]
    Space(String),
    #[error("k = {k} is invalid for a space of {size} vectors")]
    BadK { k: usize, size: usize },
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
    #[error(transparent)]
    Graph(#[from] crate::graphs::GraphError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}
