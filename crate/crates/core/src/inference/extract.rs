//! Representation extraction from trained encoders: candidate relation
//! vectors (concatenated token pairs) and per-token entity vectors.

use crate::corpus::bio::BioTag;
use crate::corpus::record::SentenceRecord;
use crate::encoder::stack::EncoderStack;
use crate::graphs::negative::sample_negative_pairs;
use crate::inference::space::{SpaceKind, SpaceLabel, TrainedSpace};
use crate::inference::InferenceError;
use crate::numeric::ParamSet;
use crate::util::mix_seed;

/// One candidate relation vector with its provenance.
#[derive(Debug, Clone)]
pub struct CandidateRep {
    pub record_index: usize,
    pub pair: (usize, usize),
    pub label: SpaceLabel,
    pub vector: Vec<f64>,
}

/// One token vector with its provenance.
#[derive(Debug, Clone)]
pub struct TokenRep {
    pub record_index: usize,
    pub token_index: usize,
    pub tag: BioTag,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub enum ExtractionMode {
    /// Annotated relations (labeled `relation`) plus hard-negative pairs
    /// (labeled `no-relation`), for building training spaces.
    GoldPairs { negatives_per_relation: usize, seed: u64 },
    /// Every ordered token pair (i, j), i != j, over real tokens; labels
    /// reflect the gold annotation. Used at inference time.
    AllCandidatePairs,
}

/// Concatenated token-pair representations from a tuned encoder.
pub fn extract_relation_reps(
    encoder: &EncoderStack,
    params: &ParamSet,
    records: &[&SentenceRecord],
    mode: ExtractionMode,
) -> Result<Vec<CandidateRep>, InferenceError> {
    let mut out = Vec::new();
    for (record_index, record) in records.iter().enumerate() {
        let rows = encoder.embed_sentence(params, record)?;
        let pair_vector = |(d, a): (usize, usize)| -> Vec<f64> {
            let mut v = Vec::with_capacity(2 * rows.cols());
            v.extend_from_slice(rows.row(d));
            v.extend_from_slice(rows.row(a));
            v
        };
        match mode {
            ExtractionMode::GoldPairs { negatives_per_relation, seed } => {
                for &pair in &record.relations {
                    out.push(CandidateRep {
                        record_index,
                        pair,
                        label: SpaceLabel::Relation,
                        vector: pair_vector(pair),
                    });
                }
                if negatives_per_relation > 0 && record.has_relations() {
                    let negatives = sample_negative_pairs(
                        record,
                        negatives_per_relation,
                        mix_seed(seed, record_index as u64),
                    )?;
                    for pair in negatives {
                        out.push(CandidateRep {
                            record_index,
                            pair,
                            label: SpaceLabel::NoRelation,
                            vector: pair_vector(pair),
                        });
                    }
                }
            }
            ExtractionMode::AllCandidatePairs => {
                let real = record.tokens.len();
                for i in 0..real {
                    for j in 0..real {
                        if i == j {
                            continue;
                        }
                        let label = if record.relations.contains(&(i, j)) {
                            SpaceLabel::Relation
                        } else {
                            SpaceLabel::NoRelation
                        };
                        out.push(CandidateRep {
                            record_index,
                            pair: (i, j),
                            label,
                            vector: pair_vector((i, j)),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-token representations labeled with their BIO tag.
pub fn extract_entity_reps(
    encoder: &EncoderStack,
    params: &ParamSet,
    records: &[&SentenceRecord],
) -> Result<Vec<TokenRep>, InferenceError> {
    let mut out = Vec::new();
    for (record_index, record) in records.iter().enumerate() {
        let rows = encoder.embed_sentence(params, record)?;
        for (token_index, tag) in record.tags.iter().enumerate() {
            out.push(TokenRep {
                record_index,
                token_index,
                tag: *tag,
                vector: rows.row(token_index).to_vec(),
            });
        }
    }
    Ok(out)
}

pub fn relation_space_from(reps: &[CandidateRep], produced_by: &str) -> Result<TrainedSpace, InferenceError> {
    let dimension = reps.first().map(|r| r.vector.len()).unwrap_or(0);
    let mut space = TrainedSpace::new(SpaceKind::Relation, dimension, produced_by.to_string());
    for rep in reps {
        space.push(rep.label, rep.vector.clone())?;
    }
    Ok(space)
}

pub fn entity_space_from(reps: &[TokenRep], produced_by: &str) -> Result<TrainedSpace, InferenceError> {
    let dimension = reps.first().map(|r| r.vector.len()).unwrap_or(0);
    let mut space = TrainedSpace::new(SpaceKind::Entity, dimension, produced_by.to_string());
    for rep in reps {
        space.push(SpaceLabel::Tag(rep.tag), rep.vector.clone())?;
    }
    Ok(space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_corpus, SynthConfig};
    use crate::encoder::source::synth_embeddings;
    use crate::numeric::ParamSet;

    fn fixture() -> (Vec<SentenceRecord>, EncoderStack, ParamSet) {
        let records =
            synth_corpus(&SynthConfig { sentences: 6, seed: 13, ..SynthConfig::default() })
                .unwrap();
        let source = synth_embeddings(&records, 6, 4).unwrap();
        let mut params = ParamSet::new();
        let stack = EncoderStack::new(source, 2, false, &mut params, "encoder", 8);
        (records, stack, params)
    }

    #[test]
    fn all_candidate_pairs_count_is_t_times_t_minus_one() {
        let (records, stack, params) = fixture();
        let one = [&records[0]];
        let reps =
            extract_relation_reps(&stack, &params, &one, ExtractionMode::AllCandidatePairs)
                .unwrap();
        let t = records[0].tokens.len();
        assert_eq!(reps.len(), t * (t - 1));
        // gold pairs appear among the candidates with the relation label
        for &pair in &records[0].relations {
            assert!(reps
                .iter()
                .any(|r| r.pair == pair && r.label == SpaceLabel::Relation));
        }
    }

    #[test]
    fn gold_mode_emits_one_positive_per_relation_plus_negatives() {
        let (records, stack, params) = fixture();
        let refs: Vec<&SentenceRecord> = records.iter().collect();
        let reps = extract_relation_reps(
            &stack,
            &params,
            &refs,
            ExtractionMode::GoldPairs { negatives_per_relation: 3, seed: 5 },
        )
        .unwrap();
        let total_relations: usize = records.iter().map(|r| r.relations.len()).sum();
        let positives = reps.iter().filter(|r| r.label == SpaceLabel::Relation).count();
        let negatives = reps.iter().filter(|r| r.label == SpaceLabel::NoRelation).count();
        assert_eq!(positives, total_relations);
        assert_eq!(negatives, 3 * total_relations);
    }

    #[test]
    fn vectors_are_twice_the_token_dimension() {
        let (records, stack, params) = fixture();
        let refs: Vec<&SentenceRecord> = records.iter().collect();
        let reps = extract_relation_reps(
            &stack,
            &params,
            &refs,
            ExtractionMode::GoldPairs { negatives_per_relation: 0, seed: 1 },
        )
        .unwrap();
        assert!(reps.iter().all(|r| r.vector.len() == 12));
    }

    #[test]
    fn entity_reps_cover_every_real_token() {
        let (records, stack, params) = fixture();
        let refs: Vec<&SentenceRecord> = records.iter().collect();
        let reps = extract_entity_reps(&stack, &params, &refs).unwrap();
        let tokens: usize = records.iter().map(|r| r.tokens.len()).sum();
        assert_eq!(reps.len(), tokens);
        let space = entity_space_from(&reps, "fp").unwrap();
        assert_eq!(space.len(), tokens);
        assert_eq!(space.dimension, 6);
    }
}
