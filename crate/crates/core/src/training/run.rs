//! The epoch loop: seeded shuffling, per-epoch negative resampling,
//! per-batch ADAM updates, per-epoch checkpoints and best-validation
//! checkpoint selection.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::folds::split_validation;
use crate::corpus::record::SentenceRecord;
use crate::encoder::source::EmbeddingSource;
use crate::encoder::stack::EncoderStack;
use crate::graphs::{
    build_disjoint_graphs, build_subgraph, sample_negatives_cldr, sample_negatives_clgs,
    DisjointGraphSet, NegativeSampleSet, RelationGraph,
};
use crate::models::sampling::{sample_balanced_entities, EntitySampleConfig};
use crate::models::{ClgsModel, ClgsOptions, CldrModel, CldrOptions, ClnerModel, ClnerOptions};
use crate::numeric::{adam_step, AdamState, ParamSet, Tape};
use crate::training::config::{ModelKind, TrainConfig};
use crate::training::manifest::ModelManifest;
use crate::training::TrainingError;
use crate::util::{log_info, mix_seed};

const SALT_SHUFFLE: u64 = 0x01;
const SALT_NEGATIVES: u64 = 0x02;
const SALT_VALIDATION: u64 = 0x03;
const SALT_ENTITY: u64 = 0x04;
const SALT_SPLIT: u64 = 0x05;

pub enum TrainedModel {
    Clgs(ClgsModel),
    Cldr(CldrModel),
    Clner(ClnerModel),
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Clgs(_) => ModelKind::Clgs,
            TrainedModel::Cldr(_) => ModelKind::Cldr,
            TrainedModel::Clner(_) => ModelKind::Clner,
        }
    }

    pub fn params(&self) -> &ParamSet {
        match self {
            TrainedModel::Clgs(m) => &m.params,
            TrainedModel::Cldr(m) => &m.params,
            TrainedModel::Clner(m) => &m.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            TrainedModel::Clgs(m) => &mut m.params,
            TrainedModel::Cldr(m) => &mut m.params,
            TrainedModel::Clner(m) => &mut m.params,
        }
    }

    pub fn encoder(&self) -> &EncoderStack {
        match self {
            TrainedModel::Clgs(m) => &m.encoder,
            TrainedModel::Cldr(m) => &m.encoder,
            TrainedModel::Clner(m) => &m.encoder,
        }
    }
}

/// Per-epoch mean losses. `epoch_val_loss` is empty when the training set
/// was too small to spare a validation subset.
#[derive(Debug, Clone, Default)]
pub struct TrainingHistory {
    pub epoch_train_loss: Vec<f64>,
    pub epoch_val_loss: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn to_text(&self) -> String {
        let mut out = String::from("epoch train_loss val_loss\n");
        for (i, train) in self.epoch_train_loss.iter().enumerate() {
            let val = self
                .epoch_val_loss
                .get(i)
                .map(|v| format!("{v}"))
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!("{} {} {}\n", i + 1, train, val));
        }
        out.push_str(&format!("best_epoch {}\n", self.best_epoch));
        out
    }
}

pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: TrainingHistory,
    pub manifest: ModelManifest,
}

fn build_model(
    config: &TrainConfig,
    source: EmbeddingSource,
) -> Result<TrainedModel, TrainingError> {
    Ok(match config.model {
        ModelKind::Clgs => TrainedModel::Clgs(ClgsModel::new(
            source,
            ClgsOptions {
                head_layers: config.head_layers,
                use_mixer: config.use_mixer,
                graph_pool: config.graph_pool,
                text_pool: config.text_pool,
                projection: config.projection,
                temperature: config.temperature,
                symmetric: config.symmetric,
            },
            config.seed,
        )?),
        ModelKind::Cldr => TrainedModel::Cldr(CldrModel::new(
            source,
            CldrOptions {
                head_layers: config.head_layers,
                use_mixer: config.use_mixer,
                self_loop_weight: config.self_loop_weight,
                temperature: config.temperature,
            },
            config.seed,
        )?),
        ModelKind::Clner => TrainedModel::Clner(ClnerModel::new(
            source,
            ClnerOptions { temperature: config.temperature },
            config.seed,
        )?),
    })
}

/// Sampled training inputs for one relation-bearing record.
enum CandidateSet {
    Graph(NegativeSampleSet<RelationGraph>),
    Disjoint(NegativeSampleSet<DisjointGraphSet>),
}

fn sample_candidates(
    kind: ModelKind,
    record: &SentenceRecord,
    source: &EmbeddingSource,
    negatives: usize,
    self_loop_weight: f64,
    seed: u64,
) -> Result<CandidateSet, TrainingError> {
    let emb = source.record_matrix(record)?;
    Ok(match kind {
        ModelKind::Clgs => {
            let graph = build_subgraph(record, emb)?;
            CandidateSet::Graph(sample_negatives_clgs(record, &graph, emb, negatives, seed)?)
        }
        ModelKind::Cldr => {
            let set = build_disjoint_graphs(record, emb, self_loop_weight)?;
            CandidateSet::Disjoint(sample_negatives_cldr(record, &set, emb, negatives, seed)?)
        }
        ModelKind::Clner => unreachable!("token-level model does not sample graphs"),
    })
}

/// Mean loss over `records` without touching gradients; used for the
/// per-epoch validation score. Negative samples are drawn from a stream
/// that does not depend on the epoch, so scores are comparable.
fn evaluate_mean_loss(
    model: &TrainedModel,
    config: &TrainConfig,
    records: &[&SentenceRecord],
    source: &EmbeddingSource,
) -> Result<f64, TrainingError> {
    if records.is_empty() {
        return Ok(f64::NAN);
    }
    let negatives = config.candidate_count - 1;
    match model {
        TrainedModel::Clner(m) => {
            let sample_cfg = EntitySampleConfig {
                per_class_quota: config.entity_quota,
                positives_per_anchor: config.entity_positives,
                candidates_per_anchor: config.entity_candidates,
            };
            let mut total = 0.0;
            let mut batches = 0usize;
            for (bi, batch) in records.chunks(config.batch_size).enumerate() {
                let sample = sample_balanced_entities(
                    batch,
                    &sample_cfg,
                    mix_seed(config.seed, SALT_VALIDATION ^ SALT_ENTITY ^ ((bi as u64) << 8)),
                );
                let mut tape = Tape::new();
                let loss = m.clner_loss_tape(&mut tape, batch, &sample)?;
                total += tape.scalar_value(loss) / sample.anchors.len().max(1) as f64;
                batches += 1;
            }
            Ok(total / batches as f64)
        }
        _ => {
            let mut total = 0.0;
            for (ri, record) in records.iter().enumerate() {
                let seed = mix_seed(config.seed, SALT_VALIDATION ^ ((ri as u64) << 8));
                let candidates = sample_candidates(
                    config.model,
                    record,
                    source,
                    negatives,
                    config.self_loop_weight,
                    seed,
                )?;
                let mut tape = Tape::new();
                let loss = match (model, &candidates) {
                    (TrainedModel::Clgs(m), CandidateSet::Graph(set)) => {
                        m.clgs_loss_tape(&mut tape, record, set)?
                    }
                    (TrainedModel::Cldr(m), CandidateSet::Disjoint(set)) => {
                        m.cldr_loss_tape(&mut tape, record, set)?
                    }
                    _ => unreachable!(),
                };
                total += tape.scalar_value(loss);
            }
            Ok(total / records.len() as f64)
        }
    }
}

/// Train a model on the given fold. Fully determined by (config, records,
/// source): shuffling, negative sampling and entity sampling all derive
/// from the config seed.
pub fn train(
    config: &TrainConfig,
    records: &[&SentenceRecord],
    source: &EmbeddingSource,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainingError> {
    config.validate()?;
    let eligible: Vec<&SentenceRecord> = match config.model {
        ModelKind::Clner => records.to_vec(),
        _ => records.iter().filter(|r| r.has_relations()).cloned().collect(),
    };
    if eligible.is_empty() {
        return Err(TrainingError::EmptyTrainingSet(config.model.to_string()));
    }

    // validation subset for checkpoint selection; tiny folds train on
    // everything and select on training loss
    let (train_set, val_set) = match split_validation(
        &eligible,
        config.validation_fraction,
        mix_seed(config.seed, SALT_SPLIT),
    ) {
        Ok((t, v)) => (t, v),
        Err(_) => (eligible.clone(), Vec::new()),
    };

    let mut model = build_model(config, source.clone())?;
    let mut adam = AdamState::new(model.params(), config.learning_rate);
    let negatives = config.candidate_count - 1;
    let sample_cfg = EntitySampleConfig {
        per_class_quota: config.entity_quota,
        positives_per_anchor: config.entity_positives,
        candidates_per_anchor: config.entity_candidates,
    };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| TrainingError::Io(dir.display().to_string(), e.to_string()))?;
    }

    let mut history = TrainingHistory::default();
    let mut best: Option<(f64, usize, ParamSet)> = None;
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(mix_seed(config.seed, SALT_SHUFFLE ^ ((epoch as u64) << 16)));
        order.shuffle(&mut shuffle_rng);

        let mut epoch_loss = 0.0;
        let mut loss_terms = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            match &mut model {
                TrainedModel::Clner(m) => {
                    let batch: Vec<&SentenceRecord> =
                        chunk.iter().map(|&i| train_set[i]).collect();
                    let seed = mix_seed(
                        config.seed,
                        SALT_ENTITY ^ ((epoch as u64) << 32) ^ ((bi as u64) << 8),
                    );
                    let sample = sample_balanced_entities(&batch, &sample_cfg, seed);
                    for tag in &sample.skipped_classes {
                        log_info(&format!("epoch {epoch} batch {bi}: no `{tag}` tokens"));
                    }
                    let mut tape = Tape::new();
                    let loss = m.clner_loss_tape(&mut tape, &batch, &sample)?;
                    let anchor_mean = tape.scalar_value(loss) / sample.anchors.len() as f64;
                    let grads = tape.backward(loss)?;
                    grads.accumulate_into(&mut m.params, 1.0 / sample.anchors.len() as f64);
                    adam_step(&mut m.params, &mut adam);
                    epoch_loss += anchor_mean;
                    loss_terms += 1;
                }
                TrainedModel::Clgs(m) => {
                    let mut batch = Vec::with_capacity(chunk.len());
                    for &i in chunk {
                        let record = train_set[i];
                        let seed = mix_seed(
                            config.seed,
                            SALT_NEGATIVES ^ ((epoch as u64) << 32) ^ ((i as u64) << 8),
                        );
                        match sample_candidates(
                            ModelKind::Clgs,
                            record,
                            source,
                            negatives,
                            config.self_loop_weight,
                            seed,
                        )? {
                            CandidateSet::Graph(set) => batch.push((record, set)),
                            CandidateSet::Disjoint(_) => unreachable!(),
                        }
                    }
                    let refs: Vec<(&SentenceRecord, &NegativeSampleSet<RelationGraph>)> =
                        batch.iter().map(|(r, s)| (*r, s)).collect();
                    let mut tape = Tape::new();
                    let loss = m.batch_loss_tape(&mut tape, &refs)?;
                    let value = tape.scalar_value(loss);
                    let grads = tape.backward(loss)?;
                    grads.accumulate_into(&mut m.params, 1.0);
                    adam_step(&mut m.params, &mut adam);
                    epoch_loss += value * chunk.len() as f64;
                    loss_terms += chunk.len();
                }
                TrainedModel::Cldr(m) => {
                    let scale = 1.0 / chunk.len() as f64;
                    let mut batch_loss = 0.0;
                    for &i in chunk {
                        let record = train_set[i];
                        let seed = mix_seed(
                            config.seed,
                            SALT_NEGATIVES ^ ((epoch as u64) << 32) ^ ((i as u64) << 8),
                        );
                        let set = match sample_candidates(
                            ModelKind::Cldr,
                            record,
                            source,
                            negatives,
                            config.self_loop_weight,
                            seed,
                        )? {
                            CandidateSet::Disjoint(set) => set,
                            CandidateSet::Graph(_) => unreachable!(),
                        };
                        let mut tape = Tape::new();
                        let loss = m.cldr_loss_tape(&mut tape, record, &set)?;
                        batch_loss += tape.scalar_value(loss);
                        let grads = tape.backward(loss)?;
                        grads.accumulate_into(&mut m.params, scale);
                    }
                    adam_step(&mut m.params, &mut adam);
                    epoch_loss += batch_loss;
                    loss_terms += chunk.len();
                }
            }
        }
        let train_loss = epoch_loss / loss_terms.max(1) as f64;
        if !train_loss.is_finite() {
            return Err(TrainingError::NonFiniteLoss(epoch));
        }
        history.epoch_train_loss.push(train_loss);

        let selection_loss = if val_set.is_empty() {
            train_loss
        } else {
            let val = evaluate_mean_loss(&model, config, &val_set, source)?;
            if !val.is_finite() {
                return Err(TrainingError::NonFiniteLoss(epoch));
            }
            history.epoch_val_loss.push(val);
            val
        };
        log_info(&format!(
            "{} epoch {epoch}/{}: train {train_loss:.6} selection {selection_loss:.6}",
            config.model, config.epochs
        ));

        if let Some(dir) = out_dir {
            let path = dir.join(format!("epoch_{epoch:03}.ckpt"));
            crate::numeric::save_checkpoint(model.params(), &path)?;
        }
        let improved = best.as_ref().map(|(b, _, _)| selection_loss < *b).unwrap_or(true);
        if improved {
            best = Some((selection_loss, epoch, model.params().clone()));
        }
    }

    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    history.best_epoch = best_epoch;
    model.params_mut().load_values(&best_params)?;

    let manifest = ModelManifest::for_model(config, source, best_epoch);
    if let Some(dir) = out_dir {
        crate::numeric::save_checkpoint(model.params(), &dir.join("model.ckpt"))?;
        fs::write(dir.join("model.manifest"), manifest.to_text())
            .map_err(|e| TrainingError::Io(dir.display().to_string(), e.to_string()))?;
        fs::write(dir.join("history.txt"), history.to_text())
            .map_err(|e| TrainingError::Io(dir.display().to_string(), e.to_string()))?;
    }
    Ok(TrainOutcome { model, history, manifest })
}

/// Rebuild a trained model from `model.ckpt` + `model.manifest` in `dir`.
/// The embedding source must match the manifest's fingerprint.
pub fn load_trained(dir: &Path, source: &EmbeddingSource) -> Result<TrainedModel, TrainingError> {
    let manifest = ModelManifest::from_file(&dir.join("model.manifest"))?;
    if manifest.source_fingerprint != source.fingerprint() {
        return Err(TrainingError::FingerprintMismatch {
            expected: manifest.source_fingerprint.clone(),
            actual: source.fingerprint(),
        });
    }
    let config = manifest.to_config()?;
    let mut model = build_model(&config, source.clone())?;
    let loaded = crate::numeric::load_checkpoint(&dir.join("model.ckpt"))?;
    model.params_mut().load_values(&loaded)?;
    Ok(model)
}
