//! Contrastive-loss primitives on plain vectors. The tape builds the same
//! quantities for training; these closed forms are the reference the tape
//! versions are checked against.

use crate::numeric::matrix::{dot, norm};
use crate::numeric::NumericError;

/// Cosine similarity of two equal-length nonzero vectors, in [-1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, NumericError> {
    if a.is_empty() || a.len() != b.len() {
        return Err(NumericError::Shape(format!(
            "cosine over lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(NumericError::ZeroVector);
    }
    Ok(dot(a, b) / (na * nb))
}

/// Temperature-scaled contrastive negative log likelihood:
///
/// `-log( sum_{p in pos} exp(sim(anchor, cand_p)/tau)
///      / sum_{k}        exp(sim(anchor, cand_k)/tau) )`
///
/// With a single positive this is the per-pair softmax loss; with several
/// positives the numerator sums over all of them.
pub fn contrastive_nll(
    anchor: &[f64],
    candidates: &[Vec<f64>],
    positive_indices: &[usize],
    tau: f64,
) -> Result<f64, NumericError> {
    if tau <= 0.0 {
        return Err(NumericError::InvalidTemperature(tau));
    }
    if positive_indices.is_empty() {
        return Err(NumericError::EmptyPositives);
    }
    for &p in positive_indices {
        if p >= candidates.len() {
            return Err(NumericError::Shape(format!(
                "positive index {} out of {} candidates",
                p,
                candidates.len()
            )));
        }
    }
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| cosine_similarity(anchor, c).map(|s| s / tau))
        .collect::<Result<_, _>>()?;
    Ok(nll_from_scores(&scores, positive_indices))
}

/// The same loss on precomputed scaled scores; shared by tests that need
/// exact control over the similarity values.
pub fn nll_from_scores(scores: &[f64], positive_indices: &[usize]) -> f64 {
    let pos: Vec<f64> = positive_indices.iter().map(|&p| scores[p]).collect();
    log_sum_exp(scores) - log_sum_exp(&pos)
}

pub fn log_sum_exp(scores: &[f64]) -> f64 {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}
