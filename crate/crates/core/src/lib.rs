//! Contrastive learning of relation-aware token embedding spaces.
//!
//! The library covers the full desk-scale pipeline: annotated-sentence
//! corpora and folds, relation graphs with spectral adjacency normalization,
//! a frozen-base text encoder with trainable head layers, three contrastive
//! models (sentence/graph, relation and entity level), deterministic
//! training, KNN inference over the learned spaces, and strict
//! entity-relation scoring.

pub mod corpus;
pub mod encoder;
pub mod evaluation;
pub mod graphs;
pub mod inference;
pub mod models;
pub mod numeric;
pub mod pipeline;
pub mod training;
pub mod util;
