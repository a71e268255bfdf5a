//! Prediction files and machine-readable score reports.
//!
//! A prediction file lists, per sentence: entity spans, relations as index
//! pairs into that entity list, and optionally the raw head-token pairs the
//! relation classifier fired on (kept for head-pair diagnostics).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::corpus::bio::{EntityType, Span};
use crate::corpus::record::SentenceRecord;
use crate::evaluation::{
    cross_fold_aggregate, gold_relation_preds, prf, re_minus, strict_entity_match,
    strict_relation_match, EvaluationError, MatchCounts, Prf, RelationPred,
};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SentencePredictions {
    pub id: String,
    pub entities: Vec<Span>,
    /// (drug entity index, AE entity index) into `entities`.
    pub relations: Vec<(usize, usize)>,
    /// Raw positive head pairs from the relation classifier, before the
    /// entity conjunction.
    pub raw_pairs: Vec<(usize, usize)>,
}

impl SentencePredictions {
    pub fn relation_preds(&self) -> Vec<RelationPred> {
        self.relations
            .iter()
            .filter_map(|&(d, a)| {
                Some(RelationPred { drug: *self.entities.get(d)?, ae: *self.entities.get(a)? })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PredictionSet {
    pub sentences: Vec<SentencePredictions>,
}

impl PredictionSet {
    pub fn for_sentence(&self, id: &str) -> Option<&SentencePredictions> {
        self.sentences.iter().find(|s| s.id == id)
    }
}

const HEADER: &str = "relcl-predictions v1";

pub fn write_predictions(set: &PredictionSet, path: &Path) -> Result<(), EvaluationError> {
    let mut out = String::from(HEADER);
    out.push('\n');
    for s in &set.sentences {
        out.push_str(&format!("sentence: {}\n", s.id));
        let ents: Vec<String> = s
            .entities
            .iter()
            .map(|e| format!("{},{},{}", e.start, e.end, e.entity_type))
            .collect();
        out.push_str(&format!("entities: {}\n", ents.join(" ")));
        let rels: Vec<String> = s.relations.iter().map(|(d, a)| format!("{d},{a}")).collect();
        out.push_str(&format!("relations: {}\n", rels.join(" ")));
        let pairs: Vec<String> = s.raw_pairs.iter().map(|(d, a)| format!("{d},{a}")).collect();
        out.push_str(&format!("pairs: {}\n", pairs.join(" ")));
    }
    fs::write(path, out).map_err(|e| EvaluationError::Io(path.display().to_string(), e.to_string()))
}

pub fn load_predictions(path: &Path) -> Result<PredictionSet, EvaluationError> {
    let text = fs::read_to_string(path)
        .map_err(|e| EvaluationError::Io(path.display().to_string(), e.to_string()))?;
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(EvaluationError::Parse(format!(
            "{}: missing or unsupported header",
            path.display()
        )));
    }
    let mut set = PredictionSet::default();
    let mut current: Option<SentencePredictions> = None;
    let parse_pairs = |value: &str| -> Result<Vec<(usize, usize)>, EvaluationError> {
        value
            .split_whitespace()
            .map(|tok| {
                let (d, a) = tok
                    .split_once(',')
                    .ok_or_else(|| EvaluationError::Parse(format!("malformed pair `{tok}`")))?;
                Ok((
                    d.parse().map_err(|_| EvaluationError::Parse(format!("malformed pair `{tok}`")))?,
                    a.parse().map_err(|_| EvaluationError::Parse(format!("malformed pair `{tok}`")))?,
                ))
            })
            .collect()
    };
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(": ")
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| EvaluationError::Parse(format!("malformed line `{line}`")))?;
        match key {
            "sentence" => {
                if let Some(s) = current.take() {
                    set.sentences.push(s);
                }
                current = Some(SentencePredictions {
                    id: value.trim().to_string(),
                    ..Default::default()
                });
            }
            "entities" => {
                let s = current
                    .as_mut()
                    .ok_or_else(|| EvaluationError::Parse("entities before sentence".into()))?;
                for tok in value.split_whitespace() {
                    let parts: Vec<&str> = tok.split(',').collect();
                    if parts.len() != 3 {
                        return Err(EvaluationError::Parse(format!("malformed entity `{tok}`")));
                    }
                    let start = parts[0]
                        .parse()
                        .map_err(|_| EvaluationError::Parse(format!("malformed entity `{tok}`")))?;
                    let end = parts[1]
                        .parse()
                        .map_err(|_| EvaluationError::Parse(format!("malformed entity `{tok}`")))?;
                    let ty = EntityType::parse(parts[2])
                        .map_err(|e| EvaluationError::Parse(e.to_string()))?;
                    s.entities.push(Span::new(start, end, ty));
                }
            }
            "relations" => {
                let s = current
                    .as_mut()
                    .ok_or_else(|| EvaluationError::Parse("relations before sentence".into()))?;
                s.relations = parse_pairs(value)?;
            }
            "pairs" => {
                let s = current
                    .as_mut()
                    .ok_or_else(|| EvaluationError::Parse("pairs before sentence".into()))?;
                s.raw_pairs = parse_pairs(value)?;
            }
            other => return Err(EvaluationError::Parse(format!("unknown key `{other}`"))),
        }
    }
    if let Some(s) = current.take() {
        set.sentences.push(s);
    }
    Ok(set)
}

/// One scored metric over a record set.
#[derive(Debug, Clone)]
pub struct ScoreReport {
    pub mode: String,
    pub counts: MatchCounts,
    pub score: Prf,
    /// Per-class scores for the entity task (class name, counts, score).
    pub per_class: Vec<(String, MatchCounts, Prf)>,
    /// Macro average over classes where that applies, else same as `score`.
    pub macro_score: Prf,
}

impl ScoreReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("relcl-score v1\n");
        out.push_str(&format!("mode: {}\n", self.mode));
        out.push_str(&format!(
            "tp: {}\nfp: {}\nfn: {}\n",
            self.counts.tp, self.counts.fp, self.counts.fn_
        ));
        out.push_str(&format!(
            "precision: {}\nrecall: {}\nf1: {}\ndegenerate: {}\n",
            self.score.precision, self.score.recall, self.score.f1, self.score.degenerate
        ));
        for (class, counts, score) in &self.per_class {
            out.push_str(&format!(
                "class: {} tp: {} fp: {} fn: {} precision: {} recall: {} f1: {}\n",
                class, counts.tp, counts.fp, counts.fn_, score.precision, score.recall, score.f1
            ));
        }
        out.push_str(&format!(
            "macro_precision: {}\nmacro_recall: {}\nmacro_f1: {}\n",
            self.macro_score.precision, self.macro_score.recall, self.macro_score.f1
        ));
        out
    }
}

fn gold_by_id(gold: &[SentenceRecord]) -> BTreeMap<&str, &SentenceRecord> {
    gold.iter().map(|r| (r.id.as_str(), r)).collect()
}

/// Strict entity scores: micro counts over all sentences plus per-class and
/// macro-averaged scores over the two entity types.
pub fn score_ner(
    gold: &[SentenceRecord],
    predictions: &PredictionSet,
) -> Result<ScoreReport, EvaluationError> {
    let by_id = gold_by_id(gold);
    let mut total = MatchCounts::default();
    let mut per_type: BTreeMap<EntityType, MatchCounts> = BTreeMap::new();
    per_type.insert(EntityType::Drug, MatchCounts::default());
    per_type.insert(EntityType::Ae, MatchCounts::default());
    for record in gold {
        let empty = SentencePredictions { id: record.id.clone(), ..Default::default() };
        let pred = predictions.for_sentence(&record.id).unwrap_or(&empty);
        let gold_spans = record.spans();
        total.add(strict_entity_match(&pred.entities, &gold_spans));
        for (ty, counts) in per_type.iter_mut() {
            let p: Vec<Span> =
                pred.entities.iter().filter(|s| s.entity_type == *ty).cloned().collect();
            let g: Vec<Span> =
                gold_spans.iter().filter(|s| s.entity_type == *ty).cloned().collect();
            counts.add(strict_entity_match(&p, &g));
        }
    }
    for s in &predictions.sentences {
        if !by_id.contains_key(s.id.as_str()) {
            return Err(EvaluationError::UnknownSentence(s.id.clone()));
        }
    }
    let per_class: Vec<(String, MatchCounts, Prf)> = per_type
        .into_iter()
        .map(|(ty, counts)| (ty.to_string(), counts, prf(counts)))
        .collect();
    let macro_score =
        cross_fold_aggregate(&per_class.iter().map(|(_, _, p)| *p).collect::<Vec<_>>()).mean;
    Ok(ScoreReport { mode: "ner".into(), counts: total, score: prf(total), per_class, macro_score })
}

/// Strict relation scores: a relation counts only when both entities are
/// strictly correct.
pub fn score_re_strict(
    gold: &[SentenceRecord],
    predictions: &PredictionSet,
) -> Result<ScoreReport, EvaluationError> {
    let by_id = gold_by_id(gold);
    let mut total = MatchCounts::default();
    for record in gold {
        let empty = SentencePredictions { id: record.id.clone(), ..Default::default() };
        let pred = predictions.for_sentence(&record.id).unwrap_or(&empty);
        total.add(strict_relation_match(&pred.relation_preds(), &gold_relation_preds(record)));
    }
    for s in &predictions.sentences {
        if !by_id.contains_key(s.id.as_str()) {
            return Err(EvaluationError::UnknownSentence(s.id.clone()));
        }
    }
    let score = prf(total);
    Ok(ScoreReport {
        mode: "re".into(),
        counts: total,
        score,
        per_class: vec![],
        macro_score: score,
    })
}

/// Head-pair scores. With `raw: false` the pairs are derived from the
/// emitted relations (comparable to the strict score on the same
/// predictions); with `raw: true` the classifier's raw pairs are used.
pub fn score_re_minus(
    gold: &[SentenceRecord],
    predictions: &PredictionSet,
    raw: bool,
) -> Result<ScoreReport, EvaluationError> {
    let by_id = gold_by_id(gold);
    let mut total = MatchCounts::default();
    for record in gold {
        let empty = SentencePredictions { id: record.id.clone(), ..Default::default() };
        let pred = predictions.for_sentence(&record.id).unwrap_or(&empty);
        let pairs: Vec<(usize, usize)> = if raw {
            pred.raw_pairs.clone()
        } else {
            pred.relation_preds().iter().map(|r| r.head_pair()).collect()
        };
        total.add(re_minus(&pairs, &record.relations));
    }
    for s in &predictions.sentences {
        if !by_id.contains_key(s.id.as_str()) {
            return Err(EvaluationError::UnknownSentence(s.id.clone()));
        }
    }
    let score = prf(total);
    let mode = if raw { "re-minus-raw" } else { "re-minus" };
    Ok(ScoreReport { mode: mode.into(), counts: total, score, per_class: vec![], macro_score: score })
}
