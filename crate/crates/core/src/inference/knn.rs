//! Exact brute-force KNN over a trained space, with deterministic tie
//! handling, plus validation-driven selection of `k`.

use std::collections::BTreeMap;

use crate::corpus::bio::BioTag;
use crate::evaluation::{cross_fold_aggregate, prf, MatchCounts};
use crate::inference::space::{SpaceKind, SpaceLabel, TrainedSpace};
use crate::inference::InferenceError;
use crate::numeric::matrix::{dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KnnMetric {
    Cosine,
    Euclidean,
}

impl KnnMetric {
    pub fn parse(s: &str) -> Result<Self, InferenceError> {
        match s {
            "cosine" => Ok(KnnMetric::Cosine),
            "euclidean" => Ok(KnnMetric::Euclidean),
            other => Err(InferenceError::Space(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct KnnConfig {
    pub k: usize,
    pub metric: KnnMetric,
}

impl Default for KnnConfig {
    fn default() -> Self {
        KnnConfig { k: 5, metric: KnnMetric::Cosine }
    }
}

fn distance(metric: KnnMetric, a: &[f64], b: &[f64]) -> f64 {
    match metric {
        KnnMetric::Cosine => {
            let na = norm(a).max(1e-12);
            let nb = norm(b).max(1e-12);
            1.0 - dot(a, b) / (na * nb)
        }
        KnnMetric::Euclidean => {
            a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        }
    }
}

/// Majority label of the k nearest stored vectors. Distance ties resolve
/// to the lower insertion index; a tied majority vote falls back to the
/// label of the single nearest neighbor.
pub fn knn_classify(
    space: &TrainedSpace,
    queries: &[Vec<f64>],
    config: &KnnConfig,
) -> Result<Vec<SpaceLabel>, InferenceError> {
    if space.is_empty() {
        return Err(InferenceError::Space("empty space".into()));
    }
    if config.k == 0 || config.k > space.len() {
        return Err(InferenceError::BadK { k: config.k, size: space.len() });
    }
    let mut out = Vec::with_capacity(queries.len());
    for query in queries {
        if query.len() != space.dimension {
            return Err(InferenceError::Space(format!(
                "query of length {} in a {}-dimensional space",
                query.len(),
                space.dimension
            )));
        }
        let mut scored: Vec<(f64, usize)> = space
            .vectors
            .iter()
            .enumerate()
            .map(|(i, (_, v))| (distance(config.metric, query, v), i))
            .collect();
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let neighbors = &scored[..config.k];
        let mut votes: BTreeMap<SpaceLabel, usize> = BTreeMap::new();
        for &(_, idx) in neighbors {
            *votes.entry(space.vectors[idx].0).or_insert(0) += 1;
        }
        let top = votes.values().max().copied().unwrap_or(0);
        let tied: Vec<SpaceLabel> =
            votes.iter().filter(|(_, &c)| c == top).map(|(l, _)| *l).collect();
        let label = if tied.len() == 1 { tied[0] } else { space.vectors[neighbors[0].1].0 };
        out.push(label);
    }
    Ok(out)
}

/// Task score used to pick `k`: binary F1 of the relation label for
/// relation spaces, macro-F1 over the tags present in the gold labels for
/// entity spaces.
pub fn knn_f1(kind: SpaceKind, predicted: &[SpaceLabel], gold: &[SpaceLabel]) -> f64 {
    match kind {
        SpaceKind::Relation => {
            let mut counts = MatchCounts::default();
            for (p, g) in predicted.iter().zip(gold.iter()) {
                match (p, g) {
                    (SpaceLabel::Relation, SpaceLabel::Relation) => counts.tp += 1,
                    (SpaceLabel::Relation, _) => counts.fp += 1,
                    (_, SpaceLabel::Relation) => counts.fn_ += 1,
                    _ => {}
                }
            }
            prf(counts).f1
        }
        SpaceKind::Entity => {
            let mut classes: BTreeMap<BioTag, MatchCounts> = BTreeMap::new();
            for (p, g) in predicted.iter().zip(gold.iter()) {
                if let SpaceLabel::Tag(gt) = g {
                    classes.entry(*gt).or_default();
                    if p == g {
                        classes.get_mut(gt).unwrap().tp += 1;
                    } else {
                        classes.get_mut(gt).unwrap().fn_ += 1;
                    }
                }
                if let SpaceLabel::Tag(pt) = p {
                    if p != g {
                        classes.entry(*pt).or_default().fp += 1;
                    }
                }
            }
            let scores: Vec<_> = classes.values().map(|c| prf(*c)).collect();
            cross_fold_aggregate(&scores).mean.f1
        }
    }
}

/// Grid-search `k` on a validation set, maximizing the task F1; ties take
/// the smallest k.
pub fn select_k(
    space: &TrainedSpace,
    validation_queries: &[Vec<f64>],
    validation_labels: &[SpaceLabel],
    grid: &[usize],
    metric: KnnMetric,
) -> Result<usize, InferenceError> {
    if validation_queries.is_empty() || validation_queries.len() != validation_labels.len() {
        return Err(InferenceError::Space(
            "validation set empty or labels misaligned".into(),
        ));
    }
    if grid.is_empty() {
        return Err(InferenceError::Space("empty k grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut best: Option<(f64, usize)> = None;
    for &k in &sorted {
        let predictions = knn_classify(space, validation_queries, &KnnConfig { k, metric })?;
        let score = knn_f1(space.kind, &predictions, validation_labels);
        if best.map(|(b, _)| score > b).unwrap_or(true) {
            best = Some((score, k));
        }
    }
    Ok(best.expect("grid nonempty").1)
}

/// Default search grid for `k`.
pub const DEFAULT_K_GRID: [usize; 6] = [1, 3, 5, 7, 9, 11];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn space_with(vectors: Vec<(SpaceLabel, Vec<f64>)>) -> TrainedSpace {
        let dim = vectors[0].1.len();
        TrainedSpace { kind: SpaceKind::Relation, dimension: dim, vectors, produced_by: String::new() }
    }

    #[test]
    fn exact_match_wins_at_k_one() {
        let space = space_with(vec![
            (SpaceLabel::Relation, vec![1.0, 0.0]),
            (SpaceLabel::NoRelation, vec![0.0, 1.0]),
        ]);
        let pred = knn_classify(&space, &[vec![1.0, 0.0]], &KnnConfig { k: 1, metric: KnnMetric::Cosine })
            .unwrap();
        assert_eq!(pred, vec![SpaceLabel::Relation]);
    }

    #[test]
    fn majority_of_three() {
        let space = space_with(vec![
            (SpaceLabel::Relation, vec![1.0, 0.0]),
            (SpaceLabel::Relation, vec![0.9, 0.1]),
            (SpaceLabel::NoRelation, vec![0.8, 0.2]),
        ]);
        let pred = knn_classify(&space, &[vec![1.0, 0.05]], &KnnConfig { k: 3, metric: KnnMetric::Cosine })
            .unwrap();
        assert_eq!(pred, vec![SpaceLabel::Relation]);
    }

    #[test]
    fn k_larger_than_space_is_an_error() {
        let space = space_with(vec![(SpaceLabel::Relation, vec![1.0])]);
        assert!(matches!(
            knn_classify(&space, &[vec![1.0]], &KnnConfig { k: 2, metric: KnnMetric::Cosine }),
            Err(InferenceError::BadK { .. })
        ));
    }

    #[test]
    fn vote_tie_falls_back_to_nearest() {
        let space = space_with(vec![
            (SpaceLabel::NoRelation, vec![1.0, 0.0]),
            (SpaceLabel::Relation, vec![0.0, 1.0]),
        ]);
        // query nearest to the no-relation vector; k=2 gives a 1-1 tie
        let pred = knn_classify(&space, &[vec![0.9, 0.1]], &KnnConfig { k: 2, metric: KnnMetric::Cosine })
            .unwrap();
        assert_eq!(pred, vec![SpaceLabel::NoRelation]);
    }

    #[test]
    fn planted_clusters_classify_perfectly_at_k_five() {
        // well-separated clusters around orthogonal centers
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut space = TrainedSpace::new(SpaceKind::Relation, 4, String::new());
        let mut queries = Vec::new();
        let mut gold = Vec::new();
        for i in 0..40 {
            let (center, label): (Vec<f64>, SpaceLabel) = if i % 2 == 0 {
                (vec![10.0, 0.0, 0.0, 0.0], SpaceLabel::Relation)
            } else {
                (vec![0.0, 10.0, 0.0, 0.0], SpaceLabel::NoRelation)
            };
            let noisy: Vec<f64> = center.iter().map(|c| c + rng.random_range(-0.5..0.5)).collect();
            if i < 30 {
                space.push(label, noisy).unwrap();
            } else {
                queries.push(noisy);
                gold.push(label);
            }
        }
        let pred =
            knn_classify(&space, &queries, &KnnConfig { k: 5, metric: KnnMetric::Cosine }).unwrap();
        assert_eq!(pred, gold);
        // exhaustive oracle over the grid agrees with select_k
        let grid = [1, 3, 5, 7, 9];
        let chosen = select_k(&space, &queries, &gold, &grid, KnnMetric::Cosine).unwrap();
        // perfectly separable at every k: the tie rule takes the smallest
        assert_eq!(chosen, 1);
    }

    #[test]
    fn select_k_matches_exhaustive_argmax_on_noisy_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut space = TrainedSpace::new(SpaceKind::Relation, 3, String::new());
        let mut queries = Vec::new();
        let mut gold = Vec::new();
        for i in 0..60 {
            let label = if i % 2 == 0 { SpaceLabel::Relation } else { SpaceLabel::NoRelation };
            let center = if i % 2 == 0 { 1.0 } else { -1.0 };
            let v: Vec<f64> = (0..3).map(|_| center + rng.random_range(-1.8..1.8)).collect();
            if i < 40 {
                space.push(label, v).unwrap();
            } else {
                queries.push(v);
                gold.push(label);
            }
        }
        let grid = [1, 3, 5, 7, 9];
        let chosen = select_k(&space, &queries, &gold, &grid, KnnMetric::Euclidean).unwrap();
        let mut best = (f64::NEG_INFINITY, 0);
        for &k in &grid {
            let pred =
                knn_classify(&space, &queries, &KnnConfig { k, metric: KnnMetric::Euclidean })
                    .unwrap();
            let f1 = knn_f1(SpaceKind::Relation, &pred, &gold);
            if f1 > best.0 {
                best = (f1, k);
            }
        }
        assert_eq!(chosen, best.1);
    }

    #[test]
    fn grid_of_one_returns_it() {
        let space = space_with(vec![
            (SpaceLabel::Relation, vec![1.0, 0.0]),
            (SpaceLabel::NoRelation, vec![0.0, 1.0]),
        ]);
        let k = select_k(
            &space,
            &[vec![1.0, 0.0]],
            &[SpaceLabel::Relation],
            &[1],
            KnnMetric::Cosine,
        )
        .unwrap();
        assert_eq!(k, 1);
    }

    proptest! {
        /// Permuting stored vectors never changes predictions, and with the
        /// cosine metric neither does positive rescaling.
        #[test]
        fn permutation_and_scale_invariance(seed in 0u64..30, k in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut vectors = Vec::new();
            for i in 0..12 {
                let label = if i % 2 == 0 { SpaceLabel::Relation } else { SpaceLabel::NoRelation };
                // keep vectors apart so reorderings cannot create distance ties
                let v: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                vectors.push((label, v));
            }
            let space = space_with(vectors.clone());
            let queries: Vec<Vec<f64>> =
                (0..4).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let config = KnnConfig { k, metric: KnnMetric::Cosine };
            let base = knn_classify(&space, &queries, &config).unwrap();

            let mut reversed = vectors.clone();
            reversed.reverse();
            let perm_space = space_with(reversed);
            let perm = knn_classify(&perm_space, &queries, &config).unwrap();
            prop_assert_eq!(&base, &perm);

            let scaled: Vec<(SpaceLabel, Vec<f64>)> = vectors
                .iter()
                .enumerate()
                .map(|(i, (l, v))| (*l, v.iter().map(|x| x * (1.0 + i as f64)).collect()))
                .collect();
            let scaled_space = space_with(scaled);
            let scaled_pred = knn_classify(&scaled_space, &queries, &config).unwrap();
            prop_assert_eq!(&base, &scaled_pred);
        }
    }
}
