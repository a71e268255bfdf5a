//! Relation-level contrastive model over disjoint two-node graphs: the
//! concatenated encoder representations of a relation's head tokens are
//! trained to match the concatenated GCN outputs of its graph, against
//! per-relation hard negatives.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::record::SentenceRecord;
use crate::encoder::source::EmbeddingSource;
use crate::encoder::stack::EncoderStack;
use crate::graphs::{DisjointGraphSet, NegativeSampleSet, RelationGraph};
use crate::models::gcn::{gcn_forward, Activation, GcnLayer};
use crate::models::{contrastive_from_scores, ModelError};
use crate::numeric::tape::{NodeId, Tape};
use crate::numeric::{Matrix, ParamSet};

#[derive(Debug, Clone, Copy)]
pub struct CldrOptions {
    pub head_layers: usize,
    pub use_mixer: bool,
    /// Self-loop weight of the two-node adjacency, in (0.5, 1.0].
    pub self_loop_weight: f64,
    pub temperature: f64,
}

impl Default for CldrOptions {
    fn default() -> Self {
        CldrOptions { head_layers: 2, use_mixer: false, self_loop_weight: 0.8, temperature: 0.1 }
    }
}

pub struct CldrModel {
    pub params: ParamSet,
    pub encoder: EncoderStack,
    pub gcn: GcnLayer,
    pub options: CldrOptions,
}

impl CldrModel {
    pub fn new(source: EmbeddingSource, options: CldrOptions, seed: u64) -> Result<Self, ModelError> {
        if options.temperature <= 0.0 {
            return Err(ModelError::BadTemperature(options.temperature));
        }
        if !(options.self_loop_weight > 0.5 && options.self_loop_weight <= 1.0) {
            return Err(ModelError::Graph(crate::graphs::GraphError::BadSelfLoopWeight(
                options.self_loop_weight,
            )));
        }
        let dim = source.dimension;
        let mut params = ParamSet::new();
        let encoder = EncoderStack::new(
            source,
            options.head_layers,
            options.use_mixer,
            &mut params,
            "encoder",
            seed,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6764_7277);
        let glorot = (6.0 / (2.0 * dim as f64)).sqrt();
        let data: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-glorot..glorot)).collect();
        let weight = params.add_trainable("gcn.weight", Matrix::from_vec(dim, dim, data)?);
        let gcn = GcnLayer { weight, activation: Activation::Relu };
        Ok(CldrModel { params, encoder, gcn, options })
    }

    /// Text-side relation representation: encoder rows of the two head
    /// tokens, concatenated (drug part first).
    pub fn relation_rep_on_tape(
        &self,
        tape: &mut Tape,
        encoder_rows: NodeId,
        (drug_head, ae_head): (usize, usize),
    ) -> Result<NodeId, ModelError> {
        let drug = tape.select_rows(encoder_rows, vec![drug_head])?;
        let ae = tape.select_rows(encoder_rows, vec![ae_head])?;
        Ok(tape.concat_cols(drug, ae)?)
    }

    /// Graph-side relation representation: GCN node outputs of the two-node
    /// graph, concatenated in node order (drug slot first).
    pub fn graph_rep_on_tape(
        &self,
        tape: &mut Tape,
        graph: &RelationGraph,
    ) -> Result<NodeId, ModelError> {
        let a = tape.constant(graph.adjacency.clone());
        let x = tape.constant(graph.node_features.clone());
        let h = gcn_forward(tape, &self.params, &self.gcn, a, x)?;
        let drug = tape.select_rows(h, vec![0])?;
        let ae = tape.select_rows(h, vec![1])?;
        Ok(tape.concat_cols(drug, ae)?)
    }

    /// Sum over the record's relations of the per-relation contrastive loss.
    /// Candidates for relation slot `r` are its positive graph plus each
    /// negative set's graph in the same slot.
    pub fn cldr_loss_tape(
        &self,
        tape: &mut Tape,
        record: &SentenceRecord,
        graph_sets: &NegativeSampleSet<DisjointGraphSet>,
    ) -> Result<NodeId, ModelError> {
        if record.relations.is_empty() {
            return Err(ModelError::NoRelations(record.id.clone()));
        }
        let encoder_rows = self.encoder.embed_on_tape(&self.params, tape, record)?;
        let mut per_relation = Vec::with_capacity(record.relations.len());
        for (r, &pair) in record.relations.iter().enumerate() {
            let anchor = self.relation_rep_on_tape(tape, encoder_rows, pair)?;
            let mut scores = Vec::with_capacity(graph_sets.candidate_count());
            for set in std::iter::once(&graph_sets.positive).chain(graph_sets.negatives.iter()) {
                let rep = self.graph_rep_on_tape(tape, &set.graphs[r])?;
                let cos = tape.cosine(anchor, rep)?;
                scores.push(tape.scale(cos, 1.0 / self.options.temperature));
            }
            per_relation.push(contrastive_from_scores(tape, &scores, &[0])?);
        }
        Ok(tape.sum_scalars(&per_relation)?)
    }
}
