//! Deterministic training: configuration, the epoch loop and model
//! manifests.

pub mod config;
pub mod manifest;
pub mod run;

pub use config::{ModelKind, TrainConfig};
pub use manifest::ModelManifest;
pub use run::{load_trained, train, TrainOutcome, TrainedModel, TrainingHistory};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainingError {
    #[error("config error: {0}")]
    Config(String),
    #[error("no eligible training records for model {0}")]
    EmptyTrainingSet(String),
    #[error("loss became non-finite at epoch {0}")]
    NonFiniteLoss(usize),
    #[error("checkpoint was trained on embedding source {expected}, got {actual}")]
    FingerprintMismatch { expected: String, actual: String },
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error(transparent)]
    Corpus(#[from] crate::corpus::CorpusError),
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
    #[error(transparent)]
    Graph(#[from] crate::graphs::GraphError),
    #[error(transparent)]
    Model(#[from] crate::models::ModelError),
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}
