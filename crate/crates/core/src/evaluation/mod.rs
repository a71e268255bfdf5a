//! Strict entity/relation scoring, the relaxed head-pair metric, and
//! cross-fold aggregation.

pub mod decode;
pub mod report;

pub use decode::decode_bio_with_repair;
pub use report::{
    load_predictions, score_ner, score_re_minus, score_re_strict, write_predictions,
    PredictionSet, ScoreReport, SentencePredictions,
};

use std::collections::BTreeSet;

use crate::corpus::bio::Span;
use crate::corpus::record::SentenceRecord;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvaluationError {
    #[error("io error on {0}: {1}")]
    Io(String, String),
    #[error("prediction file error: {0}")]
    Parse(String),
    #[error("no gold record for predicted sentence {0}")]
    UnknownSentence(String),
}

/// True/false positive and false negative counts from one matching pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl MatchCounts {
    pub fn add(&mut self, other: MatchCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Precision/recall/F1 with a flag for zero-denominator cases, which are
/// reported as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
}

pub fn prf(counts: MatchCounts) -> Prf {
    let mut degenerate = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            degenerate = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(counts.tp, counts.tp + counts.fp);
    let recall = ratio(counts.tp, counts.tp + counts.fn_);
    let f1 = if precision + recall == 0.0 {
        degenerate = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Prf { precision, recall, f1, degenerate }
}

/// Strict entity matching: a prediction counts if and only if (start, end,
/// type) all agree. Duplicate predictions are collapsed first.
pub fn strict_entity_match(predicted: &[Span], gold: &[Span]) -> MatchCounts {
    let pred: BTreeSet<Span> = predicted.iter().cloned().collect();
    let gold: BTreeSet<Span> = gold.iter().cloned().collect();
    let tp = pred.intersection(&gold).count();
    MatchCounts { tp, fp: pred.len() - tp, fn_: gold.len() - tp }
}

/// A predicted relation carries its two entities in full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct RelationPred {
    pub drug: Span,
    pub ae: Span,
}

impl RelationPred {
    pub fn head_pair(&self) -> (usize, usize) {
        (self.drug.end, self.ae.end)
    }
}

/// Strict relation matching: correct only when both entities match
/// strictly.
pub fn strict_relation_match(predicted: &[RelationPred], gold: &[RelationPred]) -> MatchCounts {
    let pred: BTreeSet<RelationPred> = predicted.iter().cloned().collect();
    let gold: BTreeSet<RelationPred> = gold.iter().cloned().collect();
    let tp = pred.intersection(&gold).count();
    MatchCounts { tp, fp: pred.len() - tp, fn_: gold.len() - tp }
}

/// Relaxed relation matching on ordered (drug head, AE head) token pairs,
/// ignoring entity boundaries and types.
pub fn re_minus(predicted: &[(usize, usize)], gold: &[(usize, usize)]) -> MatchCounts {
    let pred: BTreeSet<(usize, usize)> = predicted.iter().cloned().collect();
    let gold: BTreeSet<(usize, usize)> = gold.iter().cloned().collect();
    let tp = pred.intersection(&gold).count();
    MatchCounts { tp, fp: pred.len() - tp, fn_: gold.len() - tp }
}

/// Gold relations of a record with their full entity spans.
pub fn gold_relation_preds(record: &SentenceRecord) -> Vec<RelationPred> {
    let spans = record.spans();
    record
        .relations
        .iter()
        .filter_map(|&(d, a)| {
            let drug = spans.iter().find(|s| s.end == d)?;
            let ae = spans.iter().find(|s| s.end == a)?;
            Some(RelationPred { drug: *drug, ae: *ae })
        })
        .collect()
}

/// Per-fold scores with their arithmetic mean. The mean F1 is the mean of
/// per-fold F1 values, which generally differs from the harmonic mean of
/// the aggregated precision and recall.
#[derive(Debug, Clone)]
pub struct StrictScore {
    pub per_fold: Vec<Prf>,
    pub mean: Prf,
}

pub fn cross_fold_aggregate(per_fold: &[Prf]) -> StrictScore {
    let n = per_fold.len().max(1) as f64;
    let mean = Prf {
        precision: per_fold.iter().map(|p| p.precision).sum::<f64>() / n,
        recall: per_fold.iter().map(|p| p.recall).sum::<f64>() / n,
        f1: per_fold.iter().map(|p| p.f1).sum::<f64>() / n,
        degenerate: per_fold.iter().any(|p| p.degenerate),
    };
    StrictScore { per_fold: per_fold.to_vec(), mean }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bio::EntityType;

    fn span(s: usize, e: usize, ty: EntityType) -> Span {
        Span::new(s, e, ty)
    }

    #[test]
    fn perfect_entity_prediction() {
        let gold = vec![span(0, 1, EntityType::Drug), span(3, 3, EntityType::Ae)];
        let counts = strict_entity_match(&gold, &gold);
        assert_eq!(counts, MatchCounts { tp: 2, fp: 0, fn_: 0 });
    }

    #[test]
    fn wrong_type_or_boundary_gets_no_credit() {
        let gold = vec![span(0, 1, EntityType::Drug)];
        let wrong_type = vec![span(0, 1, EntityType::Ae)];
        assert_eq!(strict_entity_match(&wrong_type, &gold), MatchCounts { tp: 0, fp: 1, fn_: 1 });
        let off_by_one = vec![span(0, 2, EntityType::Drug)];
        assert_eq!(strict_entity_match(&off_by_one, &gold), MatchCounts { tp: 0, fp: 1, fn_: 1 });
    }

    #[test]
    fn relation_needs_both_entities_strict() {
        let gold = vec![RelationPred {
            drug: span(0, 0, EntityType::Drug),
            ae: span(2, 3, EntityType::Ae),
        }];
        assert_eq!(strict_relation_match(&gold, &gold), MatchCounts { tp: 1, fp: 0, fn_: 0 });
        let boundary_off = vec![RelationPred {
            drug: span(0, 0, EntityType::Drug),
            ae: span(2, 2, EntityType::Ae),
        }];
        assert_eq!(
            strict_relation_match(&boundary_off, &gold),
            MatchCounts { tp: 0, fp: 1, fn_: 1 }
        );
        assert_eq!(strict_relation_match(&[], &gold), MatchCounts { tp: 0, fp: 0, fn_: 1 });
    }

    #[test]
    fn re_minus_is_ordered_exact_pair_matching() {
        let gold = vec![(4, 8), (1, 2)];
        assert_eq!(re_minus(&[(4, 8)], &gold), MatchCounts { tp: 1, fp: 0, fn_: 1 });
        // reversed pair does not match
        assert_eq!(re_minus(&[(8, 4)], &gold), MatchCounts { tp: 0, fp: 1, fn_: 2 });
    }

    #[test]
    fn prf_closed_forms() {
        let p = prf(MatchCounts { tp: 1, fp: 0, fn_: 0 });
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        assert!(!p.degenerate);
        // P = 0.5, R = 1.0 -> F1 = 2/3
        let p = prf(MatchCounts { tp: 1, fp: 1, fn_: 0 });
        assert!((p.f1 - 2.0 / 3.0).abs() < 1e-12);
        let p = prf(MatchCounts { tp: 0, fp: 0, fn_: 0 });
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
        assert!(p.degenerate);
    }

    #[test]
    fn aggregate_is_mean_per_metric() {
        let folds = vec![
            Prf { precision: 1.0, recall: 0.5, f1: 2.0 / 3.0, degenerate: false },
            Prf { precision: 0.5, recall: 1.0, f1: 2.0 / 3.0, degenerate: false },
        ];
        let agg = cross_fold_aggregate(&folds);
        assert!((agg.mean.precision - 0.75).abs() < 1e-12);
        assert!((agg.mean.recall - 0.75).abs() < 1e-12);
        assert!((agg.mean.f1 - 2.0 / 3.0).abs() < 1e-12);
        // mean F1 differs from the harmonic mean of mean P and mean R
        let harmonic = 2.0 * 0.75 * 0.75 / 1.5;
        assert!((agg.mean.f1 - harmonic).abs() > 1e-3);
    }

    #[test]
    fn f1_mean_of_point_eight_and_point_six_is_point_seven() {
        let folds = vec![
            Prf { precision: 0.9, recall: 0.72, f1: 0.8, degenerate: false },
            Prf { precision: 0.7, recall: 0.53, f1: 0.6, degenerate: false },
        ];
        assert!((cross_fold_aggregate(&folds).mean.f1 - 0.7).abs() < 1e-12);
    }

    #[test]
    fn adding_a_true_positive_never_hurts() {
        for tp in 0..6usize {
            for fp in 0..4usize {
                for fn_ in 0..4usize {
                    let before = prf(MatchCounts { tp, fp, fn_ });
                    let after = prf(MatchCounts { tp: tp + 1, fp, fn_ });
                    assert!(after.precision >= before.precision);
                    assert!(after.recall >= before.recall);
                    assert!(after.f1 >= before.f1);
                }
            }
        }
    }

    #[test]
    fn single_fold_aggregate_is_identity() {
        let fold = Prf { precision: 0.8, recall: 0.6, f1: 0.686, degenerate: false };
        let agg = cross_fold_aggregate(&[fold]);
        assert_eq!(agg.mean, fold);
    }

    #[test]
    fn counts_partition_predictions_and_gold() {
        let gold = vec![span(0, 0, EntityType::Drug), span(2, 2, EntityType::Ae)];
        let pred = vec![span(0, 0, EntityType::Drug), span(5, 6, EntityType::Ae)];
        let c = strict_entity_match(&pred, &gold);
        assert_eq!(c.tp + c.fp, pred.len());
        assert_eq!(c.tp + c.fn_, gold.len());
    }
}
