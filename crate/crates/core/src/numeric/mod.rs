//! Dense linear algebra, reverse-mode differentiation, contrastive-loss
//! primitives and the ADAM optimizer. Everything is 64-bit and
//! deterministic; there is no threading in any numeric path.

pub mod adam;
pub mod checkpoint;
pub mod loss;
pub mod matrix;
pub mod param;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::{contrastive_nll, cosine_similarity, log_sum_exp, nll_from_scores};
pub use matrix::Matrix;
pub use param::{ParamId, ParamSet, Parameter};
pub use tape::{NodeId, Tape, TapeGradients};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
    #[error("contrastive loss needs at least one positive candidate")]
    EmptyPositives,
    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
    #[error("io error on {0}: {1}")]
    Io(String, String),
}
