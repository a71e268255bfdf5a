//! The three contrastive architectures: sentence/graph level, relation
//! level over disjoint graphs, and token level for entity recognition.

pub mod clgs;
pub mod cldr;
pub mod clner;
pub mod gcn;
pub mod sampling;

pub use clgs::{ClgsModel, ClgsOptions};
pub use cldr::{CldrModel, CldrOptions};
pub use clner::{ClnerModel, ClnerOptions};
pub use gcn::{gcn_forward, Activation, GcnLayer};
pub use sampling::{
    sample_balanced_entities, AnchorSample, BalancedEntitySample, EntitySampleConfig, TokenRef,
};

use crate::numeric::tape::{NodeId, Tape};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("temperature must be positive, got {0}")]
    BadTemperature(f64),
    #[error("record {0} has no relations")]
    NoRelations(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("tag class {0} has no candidate available")]
    NoCandidatesForTag(String),
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
    #[error(transparent)]
    Encoder(#[from] crate::encoder::EncoderError),
    #[error(transparent)]
    Graph(#[from] crate::graphs::GraphError),
}

/// `log-sum-exp(all) - log-sum-exp(positives)` over temperature-scaled
/// similarity scores: the shared contrastive objective of all three models.
pub fn contrastive_from_scores(
    tape: &mut Tape,
    scores: &[NodeId],
    positive_indices: &[usize],
) -> Result<NodeId, ModelError> {
    if positive_indices.is_empty() {
        return Err(ModelError::Numeric(crate::numeric::NumericError::EmptyPositives));
    }
    let positives: Vec<NodeId> = positive_indices.iter().map(|&i| scores[i]).collect();
    let all = tape.log_sum_exp(scores)?;
    let pos = tape.log_sum_exp(&positives)?;
    let neg_pos = tape.neg(pos);
    Ok(tape.add(all, neg_pos)?)
}
