//! Hard negative graphs: keep one correct relation endpoint, replace the
//! other with a within-sentence token that is not part of an entity of the
//! corrupted type.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::bio::EntityType;
use crate::corpus::record::SentenceRecord;
use crate::graphs::{
    build_subgraph_for_pairs, pair_graph, DisjointGraphSet, GraphError, RelationGraph,
};
use crate::numeric::Matrix;

/// A positive graph (or graph set) with its sampled hard negatives. The
/// candidate count seen by the contrastive loss is `negatives.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSampleSet<G> {
    pub positive: G,
    pub negatives: Vec<G>,
}

impl<G> NegativeSampleSet<G> {
    pub fn candidate_count(&self) -> usize {
        self.negatives.len() + 1
    }
}

/// Eligible replacement tokens per corruption side, shared by both samplers.
struct CorruptionPools {
    /// Tokens outside every drug span: legal replacements for a drug endpoint.
    for_drug_side: Vec<usize>,
    /// Tokens outside every AE span: legal replacements for an AE endpoint.
    for_ae_side: Vec<usize>,
}

impl CorruptionPools {
    fn new(record: &SentenceRecord) -> Self {
        let in_drug = record.tokens_in_type(EntityType::Drug);
        let in_ae = record.tokens_in_type(EntityType::Ae);
        let all = 0..record.tokens.len();
        CorruptionPools {
            for_drug_side: all.clone().filter(|t| !in_drug.contains(t)).collect(),
            for_ae_side: all.filter(|t| !in_ae.contains(t)).collect(),
        }
    }
}

/// Corrupt one endpoint of `(drug_head, ae_head)`. A fair coin picks the
/// side; if that side has no eligible token the other side is used.
fn corrupt_pair(
    record: &SentenceRecord,
    pools: &CorruptionPools,
    (drug_head, ae_head): (usize, usize),
    rng: &mut ChaCha8Rng,
) -> Result<(usize, usize), GraphError> {
    let drug_candidates: Vec<usize> =
        pools.for_drug_side.iter().cloned().filter(|&t| t != ae_head).collect();
    let ae_candidates: Vec<usize> =
        pools.for_ae_side.iter().cloned().filter(|&t| t != drug_head).collect();
    let corrupt_drug = rng.random_range(0..2u32) == 0;
    let (side, candidates) = if corrupt_drug && !drug_candidates.is_empty() {
        ("drug", &drug_candidates)
    } else if !corrupt_drug && !ae_candidates.is_empty() {
        ("ae", &ae_candidates)
    } else if !drug_candidates.is_empty() {
        ("drug", &drug_candidates)
    } else if !ae_candidates.is_empty() {
        ("ae", &ae_candidates)
    } else {
        return Err(GraphError::NoCorruptionCandidate {
            id: record.id.clone(),
            side: "drug or AE".into(),
        });
    };
    let replacement = candidates[rng.random_range(0..candidates.len())];
    Ok(match side {
        "drug" => (replacement, ae_head),
        _ => (drug_head, replacement),
    })
}

/// Corrupted head pairs without graph construction: `count` negatives per
/// relation under the same corruption rule. The relation-space extraction
/// reuses these as its no-relation examples.
pub fn sample_negative_pairs(
    record: &SentenceRecord,
    count_per_relation: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>, GraphError> {
    if record.relations.is_empty() {
        return Err(GraphError::NoRelations(record.id.clone()));
    }
    let pools = CorruptionPools::new(record);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count_per_relation * record.relations.len());
    for &pair in &record.relations {
        for _ in 0..count_per_relation {
            out.push(corrupt_pair(record, &pools, pair, &mut rng)?);
        }
    }
    Ok(out)
}

/// Sample `count` negative subgraphs for the whole-sentence setting. Every
/// relation of each negative has exactly one endpoint replaced, so no
/// negative pair can coincide with a positive pair.
pub fn sample_negatives_clgs(
    record: &SentenceRecord,
    positive: &RelationGraph,
    embeddings: &Matrix,
    count: usize,
    seed: u64,
) -> Result<NegativeSampleSet<RelationGraph>, GraphError> {
    if record.relations.is_empty() {
        return Err(GraphError::NoRelations(record.id.clone()));
    }
    let pools = CorruptionPools::new(record);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives = Vec::with_capacity(count);
    for _ in 0..count {
        let corrupted: Vec<(usize, usize)> = record
            .relations
            .iter()
            .map(|&pair| corrupt_pair(record, &pools, pair, &mut rng))
            .collect::<Result<_, _>>()?;
        negatives.push(build_subgraph_for_pairs(record, &corrupted, embeddings)?);
    }
    Ok(NegativeSampleSet { positive: positive.clone(), negatives })
}

/// Sample `count` negative graph sets for the relation-level setting: the
/// positive set is corrupted per relation, keeping two-node graphs and the
/// (drug slot, AE slot) node order.
pub fn sample_negatives_cldr(
    record: &SentenceRecord,
    positive: &DisjointGraphSet,
    embeddings: &Matrix,
    count: usize,
    seed: u64,
) -> Result<NegativeSampleSet<DisjointGraphSet>, GraphError> {
    if record.relations.is_empty() {
        return Err(GraphError::NoRelations(record.id.clone()));
    }
    if positive.graphs.len() != record.relations.len() {
        return Err(GraphError::NoRelations(format!(
            "{} (positive set size {} does not match {} relations)",
            record.id,
            positive.graphs.len(),
            record.relations.len()
        )));
    }
    let adjacency = positive.graphs[0].adjacency.clone();
    let pools = CorruptionPools::new(record);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives = Vec::with_capacity(count);
    for _ in 0..count {
        let graphs: Vec<RelationGraph> = record
            .relations
            .iter()
            .map(|&pair| {
                let corrupted = corrupt_pair(record, &pools, pair, &mut rng)?;
                pair_graph(record, embeddings, corrupted, &adjacency)
            })
            .collect::<Result<_, _>>()?;
        negatives.push(DisjointGraphSet { graphs, self_loop_weight: positive.self_loop_weight });
    }
    Ok(NegativeSampleSet { positive: positive.clone(), negatives })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bio::{BioTag as T, EntityType};
    use crate::graphs::{build_disjoint_graphs, build_subgraph};

    fn caused_by_record() -> SentenceRecord {
        SentenceRecord {
            id: "s1".into(),
            tokens: ["two", "cases", "of", "pseudoporphyria", "caused", "by", "naproxen"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            tags: vec![
                T::Outside,
                T::Outside,
                T::Outside,
                T::Begin(EntityType::Ae),
                T::Outside,
                T::Outside,
                T::Begin(EntityType::Drug),
            ],
            relations: vec![(6, 3)],
            encoded: vec![1, 2, 3, 4, 5, 6, 7],
            attention_mask: vec![1; 7],
        }
    }

    fn emb(tokens: usize) -> Matrix {
        let mut m = Matrix::zeros(tokens, 3);
        for t in 0..tokens {
            for c in 0..3 {
                m.set(t, c, (t + c) as f64 + 0.5);
            }
        }
        m
    }

    #[test]
    fn negatives_replace_exactly_one_endpoint_with_legal_token() {
        let record = caused_by_record();
        let e = emb(7);
        let graph = build_subgraph(&record, &e).unwrap();
        let set = sample_negatives_clgs(&record, &graph, &e, 20, 9).unwrap();
        assert_eq!(set.candidate_count(), 21);
        let in_drug = record.tokens_in_type(EntityType::Drug);
        let in_ae = record.tokens_in_type(EntityType::Ae);
        for neg in &set.negatives {
            // two nodes still, and the pair differs from the positive
            assert_eq!(neg.node_count(), 2);
            let nodes = &neg.node_token_indices;
            assert_ne!(nodes, &vec![3, 6]);
            // one endpoint kept, the other outside the corrupted type
            let kept_drug = nodes.contains(&6);
            let kept_ae = nodes.contains(&3);
            assert!(kept_drug || kept_ae);
            for &n in nodes {
                if kept_drug && n != 6 {
                    assert!(!in_ae.contains(&n), "replacement {n} sits in an AE span");
                }
                if kept_ae && n != 3 {
                    assert!(!in_drug.contains(&n), "replacement {n} sits in a drug span");
                }
            }
        }
    }

    #[test]
    fn sampling_is_reproducible_bit_for_bit() {
        let record = caused_by_record();
        let e = emb(7);
        let graph = build_subgraph(&record, &e).unwrap();
        let a = sample_negatives_clgs(&record, &graph, &e, 7, 42).unwrap();
        let b = sample_negatives_clgs(&record, &graph, &e, 7, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_negatives_clgs(&record, &graph, &e, 7, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn count_zero_keeps_only_the_positive() {
        let record = caused_by_record();
        let e = emb(7);
        let graph = build_subgraph(&record, &e).unwrap();
        let set = sample_negatives_clgs(&record, &graph, &e, 0, 1).unwrap();
        assert!(set.negatives.is_empty());
        assert_eq!(set.candidate_count(), 1);
    }

    #[test]
    fn all_entity_sentence_cannot_be_corrupted() {
        let record = SentenceRecord {
            id: "dense".into(),
            tokens: vec!["aspirin".into(), "rash".into()],
            tags: vec![T::Begin(EntityType::Drug), T::Begin(EntityType::Ae)],
            relations: vec![(0, 1)],
            encoded: vec![1, 2],
            attention_mask: vec![1, 1],
        };
        let e = emb(2);
        let graph = build_subgraph(&record, &e).unwrap();
        match sample_negatives_clgs(&record, &graph, &e, 1, 0) {
            Err(GraphError::NoCorruptionCandidate { id, .. }) => assert_eq!(id, "dense"),
            other => panic!("expected corruption error, got {other:?}"),
        }
    }

    #[test]
    fn cldr_negatives_are_per_relation_two_node_sets() {
        let record = SentenceRecord {
            id: "multi".into(),
            tokens: ["x", "drugA", "a", "rash", "b", "drugB", "fever", "y"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            tags: vec![
                T::Outside,
                T::Begin(EntityType::Drug),
                T::Outside,
                T::Begin(EntityType::Ae),
                T::Outside,
                T::Begin(EntityType::Drug),
                T::Begin(EntityType::Ae),
                T::Outside,
            ],
            relations: vec![(1, 3), (5, 6)],
            encoded: vec![1; 8],
            attention_mask: vec![1; 8],
        };
        let e = emb(8);
        let positive = build_disjoint_graphs(&record, &e, 0.8).unwrap();
        let set = sample_negatives_cldr(&record, &positive, &e, 3, 5).unwrap();
        assert_eq!(set.negatives.len(), 3);
        let positive_pairs: Vec<(usize, usize)> = record.relations.clone();
        for neg in &set.negatives {
            assert_eq!(neg.graphs.len(), 2);
            for (r, g) in neg.graphs.iter().enumerate() {
                assert_eq!(g.node_count(), 2);
                for (got, want) in g.adjacency.data().iter().zip([0.8, 0.2, 0.2, 0.8]) {
                    assert!((got - want).abs() < 1e-12);
                }
                let pair = (g.node_token_indices[0], g.node_token_indices[1]);
                assert!(!positive_pairs.contains(&pair), "negative reproduces a positive");
                // exactly one endpoint differs from the slot's positive
                let (pd, pa) = positive_pairs[r];
                assert!(pair.0 == pd || pair.1 == pa);
                assert!(pair != (pd, pa));
            }
        }
    }
}
