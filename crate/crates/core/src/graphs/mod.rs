//! Relation graphs over sentence tokens: essential subgraphs, spectral
//! adjacency normalization, per-relation disjoint graphs and hard negative
//! sampling.

pub mod negative;

pub use negative::{sample_negatives_cldr, sample_negatives_clgs, NegativeSampleSet};

use crate::corpus::record::SentenceRecord;
use crate::numeric::Matrix;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("record {0} has no relations; the graph is undefined")]
    NoRelations(String),
    #[error("adjacency must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("adjacency must be symmetric (differs at [{0}][{1}])")]
    NotSymmetric(usize, usize),
    #[error("adjacency entries must be 0/1 with a zero diagonal (entry [{0}][{1}] = {2})")]
    NotBinary(usize, usize, f64),
    #[error("self-loop weight must lie in (0.5, 1.0], got {0}")]
    BadSelfLoopWeight(f64),
    #[error("record {id}: no eligible {side} corruption token")]
    NoCorruptionCandidate { id: String, side: String },
    #[error("embedding matrix has {rows} rows but the record has {tokens} tokens")]
    EmbeddingMismatch { rows: usize, tokens: usize },
    #[error(transparent)]
    Numeric(#[from] crate::numeric::NumericError),
}

/// A graph over sentence tokens: node features are the frozen embedding rows
/// of the participating tokens, adjacency is either raw 0/1 or normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationGraph {
    /// Token index (into the sentence) behind each node.
    pub node_token_indices: Vec<usize>,
    /// N x F feature matrix, one row per node.
    pub node_features: Matrix,
    /// N x N adjacency.
    pub adjacency: Matrix,
    pub normalized: bool,
}

impl RelationGraph {
    pub fn node_count(&self) -> usize {
        self.node_token_indices.len()
    }

    /// The adjacency the GCN consumes: normalizes on demand.
    pub fn normalized_adjacency(&self) -> Result<Matrix, GraphError> {
        if self.normalized {
            Ok(self.adjacency.clone())
        } else {
            normalize_adjacency(&self.adjacency)
        }
    }
}

/// One two-node graph per relation, nodes ordered (drug head, AE head), with
/// the self-loop-weighted adjacency replacing spectral normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjointGraphSet {
    pub graphs: Vec<RelationGraph>,
    pub self_loop_weight: f64,
}

/// Extract the essential subgraph: nodes are exactly the tokens that head a
/// relation, with an undirected edge per relation. Raw 0/1 adjacency.
pub fn build_subgraph(
    record: &SentenceRecord,
    embeddings: &Matrix,
) -> Result<RelationGraph, GraphError> {
    build_subgraph_for_pairs(record, &record.relations, embeddings)
}

/// Subgraph over an explicit relation list; negative sampling uses this with
/// corrupted pairs.
pub(crate) fn build_subgraph_for_pairs(
    record: &SentenceRecord,
    pairs: &[(usize, usize)],
    embeddings: &Matrix,
) -> Result<RelationGraph, GraphError> {
    if pairs.is_empty() {
        return Err(GraphError::NoRelations(record.id.clone()));
    }
    if embeddings.rows() != record.tokens.len() {
        return Err(GraphError::EmbeddingMismatch {
            rows: embeddings.rows(),
            tokens: record.tokens.len(),
        });
    }
    let mut nodes: Vec<usize> = Vec::new();
    for &(d, a) in pairs {
        if !nodes.contains(&d) {
            nodes.push(d);
        }
        if !nodes.contains(&a) {
            nodes.push(a);
        }
    }
    nodes.sort_unstable();
    let slot = |tok: usize| nodes.iter().position(|&n| n == tok).expect("node present");
    let n = nodes.len();
    let mut adjacency = Matrix::zeros(n, n);
    for &(d, a) in pairs {
        let (i, j) = (slot(d), slot(a));
        adjacency.set(i, j, 1.0);
        adjacency.set(j, i, 1.0);
    }
    let mut features = Matrix::zeros(n, embeddings.cols());
    for (row, &tok) in nodes.iter().enumerate() {
        for c in 0..embeddings.cols() {
            features.set(row, c, embeddings.get(tok, c));
        }
    }
    Ok(RelationGraph {
        node_token_indices: nodes,
        node_features: features,
        adjacency,
        normalized: false,
    })
}

/// Spectral normalization `D^{-1/2} (A + I) D^{-1/2}`, where `D` is the
/// degree matrix of `A + I`. Input must be symmetric 0/1 with a zero
/// diagonal.
pub fn normalize_adjacency(a: &Matrix) -> Result<Matrix, GraphError> {
    let n = a.rows();
    if a.cols() != n {
        return Err(GraphError::NotSquare(a.rows(), a.cols()));
    }
    for i in 0..n {
        for j in 0..n {
            let v = a.get(i, j);
            if (a.get(j, i) - v).abs() != 0.0 {
                return Err(GraphError::NotSymmetric(i, j));
            }
            let binary_off_diag = i != j && (v == 0.0 || v == 1.0);
            let zero_diag = i == j && v == 0.0;
            if !(binary_off_diag || zero_diag) {
                return Err(GraphError::NotBinary(i, j, v));
            }
        }
    }
    // degree of A + I: row sum plus the self loop
    let deg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| a.get(i, j)).sum::<f64>() + 1.0).collect();
    // entry = a_hat / sqrt(d_i * d_j); the product form keeps perfect
    // squares exact, so the 2-node graph normalizes to 0.5 precisely
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let a_hat = a.get(i, j) + if i == j { 1.0 } else { 0.0 };
            out.set(i, j, a_hat / (deg[i] * deg[j]).sqrt());
        }
    }
    Ok(out)
}

/// The two-node adjacency `[[w, 1-w], [1-w, w]]` used by disjoint relation
/// graphs. Weights at or below 0.5 collapse both node outputs to the same
/// vector, so they are rejected.
pub fn self_loop_adjacency(weight: f64) -> Result<Matrix, GraphError> {
    if !(weight > 0.5 && weight <= 1.0) {
        return Err(GraphError::BadSelfLoopWeight(weight));
    }
    Matrix::from_vec(2, 2, vec![weight, 1.0 - weight, 1.0 - weight, weight]).map_err(Into::into)
}

/// One two-node graph per relation, node order (drug head, AE head). The
/// self-loop adjacency stands in for spectral normalization here.
pub fn build_disjoint_graphs(
    record: &SentenceRecord,
    embeddings: &Matrix,
    self_loop_weight: f64,
) -> Result<DisjointGraphSet, GraphError> {
    if record.relations.is_empty() {
        return Err(GraphError::NoRelations(record.id.clone()));
    }
    if embeddings.rows() != record.tokens.len() {
        return Err(GraphError::EmbeddingMismatch {
            rows: embeddings.rows(),
            tokens: record.tokens.len(),
        });
    }
    let adjacency = self_loop_adjacency(self_loop_weight)?;
    let graphs = record
        .relations
        .iter()
        .map(|&(d, a)| pair_graph(record, embeddings, (d, a), &adjacency))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DisjointGraphSet { graphs, self_loop_weight })
}

pub(crate) fn pair_graph(
    _record: &SentenceRecord,
    embeddings: &Matrix,
    (drug_head, ae_head): (usize, usize),
    adjacency: &Matrix,
) -> Result<RelationGraph, GraphError> {
    let mut features = Matrix::zeros(2, embeddings.cols());
    for c in 0..embeddings.cols() {
        features.set(0, c, embeddings.get(drug_head, c));
        features.set(1, c, embeddings.get(ae_head, c));
    }
    Ok(RelationGraph {
        node_token_indices: vec![drug_head, ae_head],
        node_features: features,
        adjacency: adjacency.clone(),
        normalized: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bio::{BioTag as T, EntityType};
    use proptest::prelude::*;

    /// "pseudoporphyria caused by naproxen and oxaprozin" with two relations
    /// sharing the AE.
    fn shared_ae_record() -> SentenceRecord {
        SentenceRecord {
            id: "s1".into(),
            tokens: ["pseudoporphyria", "caused", "by", "naproxen", "and", "oxaprozin"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            tags: vec![
                T::Begin(EntityType::Ae),
                T::Outside,
                T::Outside,
                T::Begin(EntityType::Drug),
                T::Outside,
                T::Begin(EntityType::Drug),
            ],
            relations: vec![(3, 0), (5, 0)],
            encoded: vec![1, 2, 3, 4, 5, 6],
            attention_mask: vec![1, 1, 1, 1, 1, 1],
        }
    }

    fn embeddings(tokens: usize, dim: usize) -> Matrix {
        let mut m = Matrix::zeros(tokens, dim);
        for t in 0..tokens {
            for c in 0..dim {
                m.set(t, c, (t * dim + c) as f64 * 0.1 + 1.0);
            }
        }
        m
    }

    #[test]
    fn shared_ae_gives_three_nodes_two_edges() {
        let record = shared_ae_record();
        let graph = build_subgraph(&record, &embeddings(6, 4)).unwrap();
        assert_eq!(graph.node_token_indices, vec![0, 3, 5]);
        let edge_count: f64 = graph.adjacency.data().iter().sum::<f64>() / 2.0;
        assert_eq!(edge_count, 2.0);
        assert_eq!(graph.node_features.rows(), 3);
        assert!(!graph.normalized);
    }

    #[test]
    fn single_relation_graph() {
        let mut record = shared_ae_record();
        record.relations = vec![(3, 0)];
        let graph = build_subgraph(&record, &embeddings(6, 4)).unwrap();
        assert_eq!(graph.node_count(), 2);
        assert_eq!(graph.adjacency.data(), &[0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn disjoint_relations_give_block_diagonal() {
        let record = SentenceRecord {
            id: "s2".into(),
            tokens: ["d1", "a1", "d2", "a2"].iter().map(|s| s.to_string()).collect(),
            tags: vec![
                T::Begin(EntityType::Drug),
                T::Begin(EntityType::Ae),
                T::Begin(EntityType::Drug),
                T::Begin(EntityType::Ae),
            ],
            relations: vec![(0, 1), (2, 3)],
            encoded: vec![1, 2, 3, 4],
            attention_mask: vec![1, 1, 1, 1],
        };
        let graph = build_subgraph(&record, &embeddings(4, 2)).unwrap();
        assert_eq!(graph.node_count(), 4);
        // nodes sorted 0,1,2,3: edges (0,1) and (2,3) only
        assert_eq!(graph.adjacency.get(0, 1), 1.0);
        assert_eq!(graph.adjacency.get(2, 3), 1.0);
        assert_eq!(graph.adjacency.get(0, 2), 0.0);
        assert_eq!(graph.adjacency.get(1, 3), 0.0);
    }

    #[test]
    fn zero_relations_is_an_error() {
        let mut record = shared_ae_record();
        record.relations.clear();
        assert!(matches!(
            build_subgraph(&record, &embeddings(6, 4)),
            Err(GraphError::NoRelations(_))
        ));
    }

    #[test]
    fn two_node_normalization_is_exactly_half() {
        let a = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let norm = normalize_adjacency(&a).unwrap();
        assert_eq!(norm.data(), &[0.5, 0.5, 0.5, 0.5]);
    }

    #[test]
    fn singleton_normalizes_to_one() {
        let a = Matrix::zeros(1, 1);
        assert_eq!(normalize_adjacency(&a).unwrap().data(), &[1.0]);
    }

    #[test]
    fn three_node_path_matches_hand_computation() {
        let a =
            Matrix::from_vec(3, 3, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]).unwrap();
        let norm = normalize_adjacency(&a).unwrap();
        let s6 = 1.0 / 6.0f64.sqrt();
        assert!((norm.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((norm.get(1, 1) - 1.0 / 3.0).abs() < 1e-15);
        assert!((norm.get(2, 2) - 0.5).abs() < 1e-15);
        assert!((norm.get(0, 1) - s6).abs() < 1e-15);
        assert!((norm.get(1, 2) - s6).abs() < 1e-15);
        assert_eq!(norm.get(0, 2), 0.0);
    }

    #[test]
    fn rejects_asymmetric_and_nonbinary() {
        let a = Matrix::from_vec(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(normalize_adjacency(&a), Err(GraphError::NotSymmetric(_, _))));
        let b = Matrix::from_vec(2, 2, vec![0.0, 0.5, 0.5, 0.0]).unwrap();
        assert!(matches!(normalize_adjacency(&b), Err(GraphError::NotBinary(_, _, _))));
        let c = Matrix::from_vec(2, 2, vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        assert!(matches!(normalize_adjacency(&c), Err(GraphError::NotBinary(_, _, _))));
    }

    #[test]
    fn disjoint_graphs_carry_self_loop_adjacency() {
        let mut record = shared_ae_record();
        record.relations = vec![(3, 0), (5, 0)];
        let set = build_disjoint_graphs(&record, &embeddings(6, 3), 0.8).unwrap();
        assert_eq!(set.graphs.len(), 2);
        for g in &set.graphs {
            for (got, want) in g.adjacency.data().iter().zip([0.8, 0.2, 0.2, 0.8]) {
                assert!((got - want).abs() < 1e-12);
            }
            assert!(g.normalized);
        }
        // node order is (drug head, AE head)
        assert_eq!(set.graphs[0].node_token_indices, vec![3, 0]);
        assert_eq!(set.graphs[1].node_token_indices, vec![5, 0]);
    }

    #[test]
    fn self_loop_weight_of_half_or_less_is_rejected() {
        assert!(matches!(self_loop_adjacency(0.5), Err(GraphError::BadSelfLoopWeight(_))));
        assert!(matches!(self_loop_adjacency(0.2), Err(GraphError::BadSelfLoopWeight(_))));
        assert!(matches!(self_loop_adjacency(1.1), Err(GraphError::BadSelfLoopWeight(_))));
        assert!(self_loop_adjacency(1.0).is_ok());
        assert_eq!(self_loop_adjacency(1.0).unwrap().data(), &[1.0, 0.0, 0.0, 1.0]);
    }

    proptest! {
        /// Normalization is symmetric and its diagonal equals 1/deg(A+I).
        #[test]
        fn normalization_properties(n in 1usize..8, bits in proptest::collection::vec(prop::bool::ANY, 64)) {
            let mut a = Matrix::zeros(n, n);
            let mut k = 0;
            for i in 0..n {
                for j in (i + 1)..n {
                    if bits[k % bits.len()] {
                        a.set(i, j, 1.0);
                        a.set(j, i, 1.0);
                    }
                    k += 1;
                }
            }
            let norm = normalize_adjacency(&a).unwrap();
            for i in 0..n {
                let deg: f64 = (0..n).map(|j| a.get(i, j)).sum::<f64>() + 1.0;
                prop_assert!((norm.get(i, i) - 1.0 / deg).abs() < 1e-12);
                for j in 0..n {
                    prop_assert!((norm.get(i, j) - norm.get(j, i)).abs() == 0.0);
                    prop_assert!(norm.get(i, j) >= 0.0);
                }
            }
        }

        /// Node count is at most twice the relation count, with equality
        /// exactly when no endpoints are shared.
        #[test]
        fn subgraph_node_bound(pairs in proptest::collection::vec((0usize..6, 6usize..12), 1..5)) {
            let tokens: Vec<String> = (0..12).map(|i| format!("t{i}")).collect();
            let mut tags = vec![T::Outside; 12];
            for &(d, a) in &pairs {
                tags[d] = T::Begin(EntityType::Drug);
                tags[a] = T::Begin(EntityType::Ae);
            }
            let mut unique = pairs.clone();
            unique.sort();
            unique.dedup();
            let record = SentenceRecord {
                id: "p".into(),
                tokens,
                tags,
                relations: unique.clone(),
                encoded: vec![1; 12],
                attention_mask: vec![1; 12],
            };
            let graph = build_subgraph(&record, &embeddings(12, 2)).unwrap();
            prop_assert!(graph.node_count() <= 2 * unique.len());
            let mut endpoints: Vec<usize> = unique.iter().flat_map(|&(d, a)| [d, a]).collect();
            endpoints.sort_unstable();
            let total = endpoints.len();
            endpoints.dedup();
            let no_sharing = endpoints.len() == total;
            prop_assert_eq!(graph.node_count() == 2 * unique.len(), no_sharing);
        }
    }
}
