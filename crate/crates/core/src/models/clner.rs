//! Token-level contrastive model for entity recognition: one dense layer
//! over the frozen base, trained so tokens sharing a BIO tag cluster
//! together in the batch's sampled candidate pool.

use std::collections::BTreeMap;

use crate::corpus::record::SentenceRecord;
use crate::encoder::source::EmbeddingSource;
use crate::encoder::stack::EncoderStack;
use crate::models::sampling::{BalancedEntitySample, TokenRef};
use crate::models::{contrastive_from_scores, ModelError};
use crate::numeric::tape::{NodeId, Tape};
use crate::numeric::ParamSet;

#[derive(Debug, Clone, Copy)]
pub struct ClnerOptions {
    pub temperature: f64,
}

impl Default for ClnerOptions {
    fn default() -> Self {
        ClnerOptions { temperature: 0.1 }
    }
}

pub struct ClnerModel {
    pub params: ParamSet,
    pub encoder: EncoderStack,
    pub options: ClnerOptions,
}

impl ClnerModel {
    /// The encoder gets exactly one trainable dense layer.
    pub fn new(source: EmbeddingSource, options: ClnerOptions, seed: u64) -> Result<Self, ModelError> {
        if options.temperature <= 0.0 {
            return Err(ModelError::BadTemperature(options.temperature));
        }
        let mut params = ParamSet::new();
        let encoder = EncoderStack::new(source, 1, false, &mut params, "encoder", seed);
        Ok(ClnerModel { params, encoder, options })
    }

    /// Contrastive loss over the sampled anchors of one batch; anchors and
    /// candidates are token rows of the batch's encoder outputs.
    pub fn clner_loss_tape(
        &self,
        tape: &mut Tape,
        batch: &[&SentenceRecord],
        sample: &BalancedEntitySample,
    ) -> Result<NodeId, ModelError> {
        if sample.anchors.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let mut encoded: BTreeMap<usize, NodeId> = BTreeMap::new();
        let mut row_of = |tape: &mut Tape,
                          token: TokenRef,
                          model: &ClnerModel|
         -> Result<NodeId, ModelError> {
            let rows = match encoded.get(&token.record_index) {
                Some(&node) => node,
                None => {
                    let node = model.encoder.embed_on_tape(
                        &model.params,
                        tape,
                        batch[token.record_index],
                    )?;
                    encoded.insert(token.record_index, node);
                    node
                }
            };
            Ok(tape.select_rows(rows, vec![token.token_index])?)
        };

        let mut per_anchor = Vec::with_capacity(sample.anchors.len());
        for anchor in &sample.anchors {
            if anchor.positive_indices.is_empty() || anchor.candidates.is_empty() {
                return Err(ModelError::NoCandidatesForTag(anchor.tag.to_string()));
            }
            let anchor_rep = row_of(tape, anchor.anchor, self)?;
            let mut scores = Vec::with_capacity(anchor.candidates.len());
            for &candidate in &anchor.candidates {
                let rep = row_of(tape, candidate, self)?;
                let cos = tape.cosine(anchor_rep, rep)?;
                scores.push(tape.scale(cos, 1.0 / self.options.temperature));
            }
            per_anchor.push(contrastive_from_scores(tape, &scores, &anchor.positive_indices)?);
        }
        Ok(tape.sum_scalars(&per_anchor)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_corpus, SynthConfig};
    use crate::encoder::source::synth_embeddings;
    use crate::models::sampling::{sample_balanced_entities, AnchorSample, EntitySampleConfig};

    fn fixture() -> (Vec<SentenceRecord>, ClnerModel) {
        let records =
            synth_corpus(&SynthConfig { sentences: 8, seed: 17, ..SynthConfig::default() })
                .unwrap();
        let source = synth_embeddings(&records, 8, 2).unwrap();
        let model = ClnerModel::new(source, ClnerOptions::default(), 3).unwrap();
        (records, model)
    }

    #[test]
    fn encoder_has_exactly_one_dense_layer() {
        let (_, model) = fixture();
        assert_eq!(model.encoder.head.len(), 1);
        assert!(model.encoder.mixer.is_none());
        assert_eq!(model.params.len(), 2); // weight + bias
    }

    #[test]
    fn all_positive_candidates_give_zero_loss() {
        let (records, model) = fixture();
        let batch: Vec<&SentenceRecord> = records.iter().collect();
        let mut sample = sample_balanced_entities(&batch, &EntitySampleConfig::default(), 5);
        // keep only positives in every candidate list
        for anchor in &mut sample.anchors {
            let positives: Vec<TokenRef> =
                anchor.positive_indices.iter().map(|&i| anchor.candidates[i]).collect();
            anchor.positive_indices = (0..positives.len()).collect();
            anchor.candidates = positives;
        }
        sample.anchors.retain(|a| !a.candidates.is_empty());
        let mut tape = Tape::new();
        let loss = model.clner_loss_tape(&mut tape, &batch, &sample).unwrap();
        assert!(tape.scalar_value(loss).abs() < 1e-9);
    }

    #[test]
    fn anchor_without_positives_is_a_tag_error() {
        let (records, model) = fixture();
        let batch: Vec<&SentenceRecord> = records.iter().collect();
        let sample = BalancedEntitySample {
            anchors: vec![AnchorSample {
                anchor: TokenRef { record_index: 0, token_index: 0 },
                tag: records[0].tags[0],
                positive_indices: vec![],
                candidates: vec![TokenRef { record_index: 0, token_index: 1 }],
            }],
            skipped_classes: vec![],
        };
        let mut tape = Tape::new();
        assert!(matches!(
            model.clner_loss_tape(&mut tape, &batch, &sample),
            Err(ModelError::NoCandidatesForTag(_))
        ));
    }

    #[test]
    fn one_small_step_decreases_the_instance_loss() {
        use crate::numeric::{adam_step, AdamState};
        let (records, mut model) = fixture();
        let batch: Vec<&SentenceRecord> = records.iter().take(4).collect();
        let sample = sample_balanced_entities(&batch, &EntitySampleConfig::default(), 6);
        let mut tape = Tape::new();
        let loss = model.clner_loss_tape(&mut tape, &batch, &sample).unwrap();
        let before = tape.scalar_value(loss);
        assert!(before >= 0.0, "contrastive losses are nonnegative");
        let grads = tape.backward(loss).unwrap();
        grads.accumulate_into(&mut model.params, 1.0);
        let mut adam = AdamState::new(&model.params, 1e-4);
        adam_step(&mut model.params, &mut adam);
        let mut tape = Tape::new();
        let loss = model.clner_loss_tape(&mut tape, &batch, &sample).unwrap();
        assert!(tape.scalar_value(loss) < before);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let (records, mut model) = fixture();
        let batch: Vec<&SentenceRecord> = records.iter().take(3).collect();
        let cfg = EntitySampleConfig {
            per_class_quota: 2,
            positives_per_anchor: 2,
            candidates_per_anchor: 5,
        };
        let sample = sample_balanced_entities(&batch, &cfg, 11);
        let mut tape = Tape::new();
        let loss = model.clner_loss_tape(&mut tape, &batch, &sample).unwrap();
        let grads = tape.backward(loss).unwrap();
        let eps = 1e-4;
        let pairs: Vec<_> = grads.iter().map(|(id, g)| (id, g.clone())).collect();
        for (pid, grad) in pairs {
            for i in (0..grad.data().len()).step_by(5) {
                let orig = model.params.value(pid).data()[i];
                model.params.value_mut(pid).data_mut()[i] = orig + eps;
                let mut tp = Tape::new();
                let lp = model.clner_loss_tape(&mut tp, &batch, &sample).unwrap();
                let fp = tp.scalar_value(lp);
                model.params.value_mut(pid).data_mut()[i] = orig - eps;
                let mut tm = Tape::new();
                let lm = model.clner_loss_tape(&mut tm, &batch, &sample).unwrap();
                let fm = tm.scalar_value(lm);
                model.params.value_mut(pid).data_mut()[i] = orig;
                let fd = (fp - fm) / (2.0 * eps);
                let an = grad.data()[i];
                let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-4);
                assert!(rel < 1e-4, "entry {i}: analytic {an} vs fd {fd}");
            }
        }
    }
}
