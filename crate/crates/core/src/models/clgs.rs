//! Sentence/graph-level contrastive model: a pooled sentence representation
//! is trained to single out the pooled representation of its true relation
//! subgraph among hard negatives.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::record::SentenceRecord;
use crate::encoder::pooling::{pool_on_tape, PoolingMode};
use crate::encoder::source::EmbeddingSource;
use crate::encoder::stack::{DenseLayer, EncoderStack};
use crate::graphs::{NegativeSampleSet, RelationGraph};
use crate::models::gcn::{gcn_forward, Activation, GcnLayer};
use crate::models::{contrastive_from_scores, ModelError};
use crate::numeric::tape::{NodeId, Tape};
use crate::numeric::{Matrix, ParamSet};

#[derive(Debug, Clone, Copy)]
pub struct ClgsOptions {
    pub head_layers: usize,
    pub use_mixer: bool,
    pub graph_pool: PoolingMode,
    pub text_pool: PoolingMode,
    /// Optional projection heads (one rectified dense layer per side)
    /// applied before the loss and discarded at extraction time.
    pub projection: bool,
    pub temperature: f64,
    /// Adds the graph-to-sentence direction over the batch's sentences.
    pub symmetric: bool,
}

impl Default for ClgsOptions {
    fn default() -> Self {
        ClgsOptions {
            head_layers: 2,
            use_mixer: false,
            graph_pool: PoolingMode::Mean,
            text_pool: PoolingMode::Mean,
            projection: false,
            temperature: 0.1,
            symmetric: false,
        }
    }
}

pub struct ClgsModel {
    pub params: ParamSet,
    pub encoder: EncoderStack,
    pub gcn: GcnLayer,
    pub options: ClgsOptions,
    projection: Option<(DenseLayer, DenseLayer)>,
}

impl ClgsModel {
    pub fn new(source: EmbeddingSource, options: ClgsOptions, seed: u64) -> Result<Self, ModelError> {
        if options.temperature <= 0.0 {
            return Err(ModelError::BadTemperature(options.temperature));
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
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6763_6e77);
        let glorot = (6.0 / (2.0 * dim as f64)).sqrt();
        let mut init = |name: &str, params: &mut ParamSet| {
            let data: Vec<f64> = (0..dim * dim).map(|_| rng.random_range(-glorot..glorot)).collect();
            params.add_trainable(name, Matrix::from_vec(dim, dim, data).expect("init"))
        };
        let gcn = GcnLayer { weight: init("gcn.weight", &mut params), activation: Activation::Tanh };
        let projection = options.projection.then(|| {
            let text = DenseLayer {
                weight: init("projection.text.weight", &mut params),
                bias: params.add_trainable("projection.text.bias", Matrix::zeros(1, dim)),
            };
            let graph = DenseLayer {
                weight: init("projection.graph.weight", &mut params),
                bias: params.add_trainable("projection.graph.bias", Matrix::zeros(1, dim)),
            };
            (text, graph)
        });
        Ok(ClgsModel { params, encoder, gcn, options, projection })
    }

    fn project(
        &self,
        tape: &mut Tape,
        rep: NodeId,
        layer: Option<&DenseLayer>,
    ) -> Result<NodeId, ModelError> {
        match layer {
            None => Ok(rep),
            Some(l) => {
                let w = tape.param(&self.params, l.weight);
                let b = tape.param(&self.params, l.bias);
                let h = tape.matmul(rep, w)?;
                let h = tape.add_row_broadcast(h, b)?;
                Ok(tape.relu(h))
            }
        }
    }

    /// Pooled (and, when enabled, projected) sentence representation.
    pub fn sentence_rep_on_tape(
        &self,
        tape: &mut Tape,
        record: &SentenceRecord,
    ) -> Result<NodeId, ModelError> {
        let rows = self.encoder.embed_on_tape(&self.params, tape, record)?;
        let pooled = pool_on_tape(tape, rows, self.options.text_pool, None)?;
        self.project(tape, pooled, self.projection.as_ref().map(|(t, _)| t))
    }

    /// Pooled (and projected) representation of one candidate graph.
    pub fn graph_rep_on_tape(
        &self,
        tape: &mut Tape,
        graph: &RelationGraph,
    ) -> Result<NodeId, ModelError> {
        let a_norm = tape.constant(graph.normalized_adjacency()?);
        let x = tape.constant(graph.node_features.clone());
        let h = gcn_forward(tape, &self.params, &self.gcn, a_norm, x)?;
        let pooled = pool_on_tape(tape, h, self.options.graph_pool, None)?;
        self.project(tape, pooled, self.projection.as_ref().map(|(_, g)| g))
    }

    /// Temperature-scaled similarity scores of the sentence against the
    /// positive (index 0) and each negative graph.
    pub fn candidate_scores_on_tape(
        &self,
        tape: &mut Tape,
        record: &SentenceRecord,
        graphs: &NegativeSampleSet<RelationGraph>,
    ) -> Result<Vec<NodeId>, ModelError> {
        let sentence = self.sentence_rep_on_tape(tape, record)?;
        let mut scores = Vec::with_capacity(graphs.candidate_count());
        for graph in std::iter::once(&graphs.positive).chain(graphs.negatives.iter()) {
            let rep = self.graph_rep_on_tape(tape, graph)?;
            let cos = tape.cosine(sentence, rep)?;
            scores.push(tape.scale(cos, 1.0 / self.options.temperature));
        }
        Ok(scores)
    }

    /// Per-pair sentence-to-graph contrastive loss; the positive graph sits
    /// at candidate index 0.
    pub fn clgs_loss_tape(
        &self,
        tape: &mut Tape,
        record: &SentenceRecord,
        graphs: &NegativeSampleSet<RelationGraph>,
    ) -> Result<NodeId, ModelError> {
        let scores = self.candidate_scores_on_tape(tape, record, graphs)?;
        contrastive_from_scores(tape, &scores, &[0])
    }

    /// Batch loss: mean of per-record losses, plus (when enabled) the mean
    /// graph-to-sentence term whose candidate pool is the batch's sentences.
    pub fn batch_loss_tape(
        &self,
        tape: &mut Tape,
        batch: &[(&SentenceRecord, &NegativeSampleSet<RelationGraph>)],
    ) -> Result<NodeId, ModelError> {
        if batch.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut sentence_reps = Vec::with_capacity(batch.len());
        let mut positive_reps = Vec::with_capacity(batch.len());
        let mut losses = Vec::with_capacity(batch.len());
        for (record, graphs) in batch {
            let sentence = self.sentence_rep_on_tape(tape, record)?;
            sentence_reps.push(sentence);
            let mut scores = Vec::with_capacity(graphs.candidate_count());
            for (gi, graph) in
                std::iter::once(&graphs.positive).chain(graphs.negatives.iter()).enumerate()
            {
                let rep = self.graph_rep_on_tape(tape, graph)?;
                if gi == 0 {
                    positive_reps.push(rep);
                }
                let cos = tape.cosine(sentence, rep)?;
                scores.push(tape.scale(cos, 1.0 / self.options.temperature));
            }
            losses.push(contrastive_from_scores(tape, &scores, &[0])?);
        }
        if self.options.symmetric {
            for (i, &graph_rep) in positive_reps.iter().enumerate() {
                let mut scores = Vec::with_capacity(sentence_reps.len());
                let mut positive = 0;
                for (j, &sentence) in sentence_reps.iter().enumerate() {
                    if j == i {
                        positive = scores.len();
                    }
                    let cos = tape.cosine(graph_rep, sentence)?;
                    scores.push(tape.scale(cos, 1.0 / self.options.temperature));
                }
                losses.push(contrastive_from_scores(tape, &scores, &[positive])?);
            }
        }
        let total = tape.sum_scalars(&losses)?;
        Ok(tape.scale(total, 1.0 / batch.len() as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_corpus, SynthConfig};
    use crate::encoder::source::synth_embeddings;
    use crate::graphs::{build_subgraph, sample_negatives_clgs};

    fn fixture() -> (Vec<SentenceRecord>, EmbeddingSource) {
        let records =
            synth_corpus(&SynthConfig { sentences: 6, seed: 21, ..SynthConfig::default() })
                .unwrap();
        let source = synth_embeddings(&records, 8, 5).unwrap();
        (records, source)
    }

    fn loss_for(record: &SentenceRecord, model: &ClgsModel, negatives: usize) -> f64 {
        let emb = model.encoder.base.record_matrix(record).unwrap().clone();
        let graph = build_subgraph(record, &emb).unwrap();
        let set = sample_negatives_clgs(record, &graph, &emb, negatives, 3).unwrap();
        let mut tape = Tape::new();
        let loss = model.clgs_loss_tape(&mut tape, record, &set).unwrap();
        tape.scalar_value(loss)
    }

    #[test]
    fn positive_only_candidate_set_gives_zero_loss() {
        let (records, source) = fixture();
        let model = ClgsModel::new(source, ClgsOptions::default(), 1).unwrap();
        let record = records.iter().find(|r| r.has_relations()).unwrap();
        assert!(loss_for(record, &model, 0).abs() < 1e-12);
    }

    #[test]
    fn identical_graph_reps_give_log_z() {
        let (records, source) = fixture();
        let model = ClgsModel::new(source, ClgsOptions::default(), 1).unwrap();
        let record = records.iter().find(|r| r.has_relations()).unwrap();
        let emb = model.encoder.base.record_matrix(record).unwrap().clone();
        let graph = build_subgraph(record, &emb).unwrap();
        // six copies of the positive graph as "negatives"
        let set = NegativeSampleSet { positive: graph.clone(), negatives: vec![graph; 6] };
        let mut tape = Tape::new();
        let loss = model.clgs_loss_tape(&mut tape, record, &set).unwrap();
        assert!((tape.scalar_value(loss) - (7.0f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn graph_rep_entries_stay_in_tanh_range() {
        let (records, source) = fixture();
        let model = ClgsModel::new(source, ClgsOptions::default(), 2).unwrap();
        let record = records.iter().find(|r| r.has_relations()).unwrap();
        let emb = model.encoder.base.record_matrix(record).unwrap().clone();
        let graph = build_subgraph(record, &emb).unwrap();
        let mut tape = Tape::new();
        let rep = model.graph_rep_on_tape(&mut tape, &graph).unwrap();
        assert!(tape.value(rep).data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn symmetric_batch_loss_adds_reverse_terms() {
        let (records, source) = fixture();
        let rels: Vec<&SentenceRecord> = records.iter().filter(|r| r.has_relations()).collect();
        let one_way =
            ClgsModel::new(source.clone(), ClgsOptions::default(), 1).unwrap();
        let two_way = ClgsModel::new(
            source,
            ClgsOptions { symmetric: true, ..ClgsOptions::default() },
            1,
        )
        .unwrap();
        let batch: Vec<(&SentenceRecord, NegativeSampleSet<RelationGraph>)> = rels[..2]
            .iter()
            .map(|r| {
                let emb = one_way.encoder.base.record_matrix(r).unwrap().clone();
                let graph = build_subgraph(r, &emb).unwrap();
                let set = sample_negatives_clgs(r, &graph, &emb, 3, 5).unwrap();
                (*r, set)
            })
            .collect();
        let refs: Vec<(&SentenceRecord, &NegativeSampleSet<RelationGraph>)> =
            batch.iter().map(|(r, s)| (*r, s)).collect();
        let mut t1 = Tape::new();
        let l1 = one_way.batch_loss_tape(&mut t1, &refs).unwrap();
        let mut t2 = Tape::new();
        let l2 = two_way.batch_loss_tape(&mut t2, &refs).unwrap();
        // same weights (same seed), so the symmetric variant strictly adds loss
        assert!(t2.scalar_value(l2) > t1.scalar_value(l1));
    }

    #[test]
    fn one_small_step_decreases_the_instance_loss() {
        use crate::numeric::{adam_step, AdamState};
        let (records, source) = fixture();
        let mut model = ClgsModel::new(source, ClgsOptions::default(), 9).unwrap();
        let record = records.iter().find(|r| r.has_relations()).unwrap();
        let emb = model.encoder.base.record_matrix(record).unwrap().clone();
        let graph = build_subgraph(record, &emb).unwrap();
        let set = sample_negatives_clgs(record, &graph, &emb, 4, 2).unwrap();
        let mut tape = Tape::new();
        let loss = model.clgs_loss_tape(&mut tape, record, &set).unwrap();
        let before = tape.scalar_value(loss);
        assert!(before >= 0.0, "contrastive losses are nonnegative");
        let grads = tape.backward(loss).unwrap();
        grads.accumulate_into(&mut model.params, 1.0);
        let mut adam = AdamState::new(&model.params, 1e-4);
        adam_step(&mut model.params, &mut adam);
        let mut tape = Tape::new();
        let loss = model.clgs_loss_tape(&mut tape, record, &set).unwrap();
        assert!(tape.scalar_value(loss) < before);
    }

    #[test]
    fn projection_heads_participate_in_the_loss() {
        let (records, source) = fixture();
        let model = ClgsModel::new(
            source,
            ClgsOptions { projection: true, ..ClgsOptions::default() },
            4,
        )
        .unwrap();
        let record = records.iter().find(|r| r.has_relations()).unwrap();
        let emb = model.encoder.base.record_matrix(record).unwrap().clone();
        let graph = build_subgraph(record, &emb).unwrap();
        let set = sample_negatives_clgs(record, &graph, &emb, 2, 3).unwrap();
        let mut tape = Tape::new();
        let loss = model.clgs_loss_tape(&mut tape, record, &set).unwrap();
        let grads = tape.backward(loss).unwrap();
        let names: Vec<&str> =
            grads.iter().map(|(id, _)| model.params.name(id)).collect();
        assert!(names.iter().any(|n| n.starts_with("projection.text")));
        assert!(names.iter().any(|n| n.starts_with("projection.graph")));
    }
}
