//! The end-to-end pipeline: prepare data, train the relation and entity
//! models, extract spaces, classify the test fold with KNN over both
//! spaces, and score strictly.
//!
//! A candidate relation is emitted only when the relation-space classifier
//! fires on its head pair and both heads close a predicted entity of the
//! right type; the relaxed head-pair metric additionally sees the raw
//! classifier output.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::bio::{BioTag, EntityType};
use crate::corpus::folds::{load_folds, make_folds, split_validation, write_folds, FoldSplit};
use crate::corpus::io::{load_corpus, write_corpus};
use crate::corpus::record::SentenceRecord;
use crate::corpus::synth::{synth_corpus, SynthConfig};
use crate::encoder::source::{load_sidecars, synth_embeddings, write_sidecars, EmbeddingSource};
use crate::evaluation::report::{
    score_ner, score_re_minus, score_re_strict, write_predictions, PredictionSet, ScoreReport,
    SentencePredictions,
};
use crate::evaluation::decode::decode_bio_with_repair;
use crate::inference::extract::{
    entity_space_from, extract_entity_reps, extract_relation_reps, relation_space_from,
    ExtractionMode,
};
use crate::inference::knn::{knn_classify, select_k, KnnConfig, KnnMetric, DEFAULT_K_GRID};
use crate::inference::space::{write_space, SpaceLabel};
use crate::training::config::{ModelKind, TrainConfig};
use crate::training::run::{load_trained, train, TrainedModel};
use crate::util::{log_info, mix_seed};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {stage}: missing input {artifact}")]
    MissingInput { stage: String, artifact: String },
    #[error("stage {stage}: {source}")]
    Stage { stage: String, source: Box<dyn std::error::Error + Send + Sync> },
    #[error("config error: {0}")]
    Config(String),
    #[error("io error on {0}: {1}")]
    Io(String, String),
}

fn stage_err<E: std::error::Error + Send + Sync + 'static>(
    stage: &str,
) -> impl Fn(E) -> PipelineError + '_ {
    move |e| PipelineError::Stage { stage: stage.to_string(), source: Box::new(e) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Prep,
    TrainCldr,
    TrainClner,
    Extract,
    Knn,
    Score,
}

impl Stage {
    pub fn parse(s: &str) -> Result<Self, PipelineError> {
        match s {
            "prep" => Ok(Stage::Prep),
            "train-cldr" => Ok(Stage::TrainCldr),
            "train-clner" => Ok(Stage::TrainClner),
            "extract" => Ok(Stage::Extract),
            "knn" => Ok(Stage::Knn),
            "score" => Ok(Stage::Score),
            other => Err(PipelineError::Config(format!("unknown stage `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Prep => "prep",
            Stage::TrainCldr => "train-cldr",
            Stage::TrainClner => "train-clner",
            Stage::Extract => "extract",
            Stage::Knn => "knn",
            Stage::Score => "score",
        }
    }

    pub fn all() -> Vec<Stage> {
        vec![Stage::Prep, Stage::TrainCldr, Stage::TrainClner, Stage::Extract, Stage::Knn, Stage::Score]
    }
}

/// Everything a run needs to locate its inputs and outputs.
#[derive(Debug, Clone)]
pub struct PipelineManifest {
    pub data_dir: PathBuf,
    pub emb_dir: PathBuf,
    pub splits_dir: Option<PathBuf>,
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub fold: usize,
}

impl PipelineManifest {
    pub fn to_text(&self) -> String {
        format!(
            "relcl-pipeline-manifest v1\ndata = {}\nemb = {}\nsplits = {}\nconfig = {}\nout = {}\nseed = {}\nfold = {}\n",
            self.data_dir.display(),
            self.emb_dir.display(),
            self.splits_dir.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "-".into()),
            self.config_path.display(),
            self.out_dir.display(),
            self.seed,
            self.fold
        )
    }
}

/// Pipeline-level settings read from the shared config file; training keys
/// are parsed separately per model with their scope prefixes.
#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub emb_dim: usize,
    pub emb_seed: u64,
    pub synth_sentences: usize,
    pub synth_seed: u64,
    pub synth_density: f64,
    pub folds: usize,
    pub negatives_per_relation: usize,
    pub knn_grid: Vec<usize>,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings {
            emb_dim: 96,
            emb_seed: 22,
            synth_sentences: 0,
            synth_seed: 1,
            synth_density: 1.0,
            folds: 10,
            negatives_per_relation: 3,
            knn_grid: DEFAULT_K_GRID.to_vec(),
        }
    }
}

impl PipelineSettings {
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Io(path.display().to_string(), e.to_string()))?;
        let mut settings = PipelineSettings::default();
        for raw in text.lines() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else { continue };
            let key = key.trim();
            let value = value.trim();
            let bad =
                |k: &str| PipelineError::Config(format!("key `{k}`: cannot parse `{value}`"));
            match key {
                "emb_dim" => settings.emb_dim = value.parse().map_err(|_| bad(key))?,
                "emb_seed" => settings.emb_seed = value.parse().map_err(|_| bad(key))?,
                "synth_sentences" => {
                    settings.synth_sentences = value.parse().map_err(|_| bad(key))?
                }
                "synth_seed" => settings.synth_seed = value.parse().map_err(|_| bad(key))?,
                "synth_density" => settings.synth_density = value.parse().map_err(|_| bad(key))?,
                "folds" => settings.folds = value.parse().map_err(|_| bad(key))?,
                "negatives_per_relation" => {
                    settings.negatives_per_relation = value.parse().map_err(|_| bad(key))?
                }
                "knn_grid" => {
                    settings.knn_grid = value
                        .split(',')
                        .map(|t| t.trim().parse::<usize>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad(key))?
                }
                _ => {}
            }
        }
        Ok(settings)
    }
}

pub struct PipelineReport {
    pub ran: Vec<Stage>,
    pub scores: BTreeMap<String, ScoreReport>,
}

struct LoadedFold {
    records: Vec<SentenceRecord>,
    source: EmbeddingSource,
    train: Vec<usize>,
    test: Vec<usize>,
}

fn load_fold_inputs(
    manifest: &PipelineManifest,
    stage: &str,
) -> Result<LoadedFold, PipelineError> {
    let records = load_corpus(&manifest.data_dir).map_err(stage_err(stage))?;
    if records.is_empty() {
        return Err(PipelineError::MissingInput {
            stage: stage.into(),
            artifact: format!("records in {}", manifest.data_dir.display()),
        });
    }
    let source = load_sidecars(&records, &manifest.emb_dir).map_err(stage_err(stage))?;
    let folds = match &manifest.splits_dir {
        Some(dir) => load_folds(dir).map_err(stage_err(stage))?,
        None => {
            let generated = manifest.out_dir.join("splits");
            if generated.join("fold1.train").exists() {
                load_folds(&generated).map_err(stage_err(stage))?
            } else {
                return Err(PipelineError::MissingInput {
                    stage: stage.into(),
                    artifact: format!("split files (run prep or pass --splits): {}", generated.display()),
                });
            }
        }
    };
    let fold = folds
        .iter()
        .find(|f| f.fold_index == manifest.fold)
        .ok_or_else(|| PipelineError::MissingInput {
            stage: stage.into(),
            artifact: format!("fold {}", manifest.fold),
        })?;
    let index_of: BTreeMap<&str, usize> =
        records.iter().enumerate().map(|(i, r)| (r.id.as_str(), i)).collect();
    let resolve = |ids: &[String]| -> Vec<usize> {
        ids.iter().filter_map(|id| index_of.get(id.as_str()).copied()).collect()
    };
    let train = resolve(&fold.train_ids);
    let test = resolve(&fold.test_ids);
    Ok(LoadedFold { records, source, train, test })
}

fn stage_dir(manifest: &PipelineManifest, stage: Stage) -> PathBuf {
    manifest.out_dir.join(stage.as_str())
}

fn run_prep(
    manifest: &PipelineManifest,
    settings: &PipelineSettings,
) -> Result<(), PipelineError> {
    let stage = "prep";
    let have_records = manifest.data_dir.is_dir()
        && fs::read_dir(&manifest.data_dir)
            .map(|mut it| it.any(|e| matches!(e, Ok(e) if e.path().extension().is_some_and(|x| x == "rec"))))
            .unwrap_or(false);
    if !have_records {
        if settings.synth_sentences == 0 {
            return Err(PipelineError::MissingInput {
                stage: stage.into(),
                artifact: format!(
                    "records in {} (set synth_sentences in the config to generate)",
                    manifest.data_dir.display()
                ),
            });
        }
        let config = SynthConfig {
            sentences: settings.synth_sentences,
            seed: settings.synth_seed,
            relation_density: settings.synth_density,
            ..SynthConfig::default()
        };
        let records = synth_corpus(&config).map_err(stage_err(stage))?;
        write_corpus(&records, &manifest.data_dir).map_err(stage_err(stage))?;
        log_info(&format!("prep: generated {} synthetic records", records.len()));
    }
    let records = load_corpus(&manifest.data_dir).map_err(stage_err(stage))?;
    for record in &records {
        record.validate().map_err(stage_err(stage))?;
    }

    let have_sidecars = records
        .first()
        .map(|r| manifest.emb_dir.join(format!("{}.emb", r.id)).exists())
        .unwrap_or(false);
    if !have_sidecars {
        let source = synth_embeddings(&records, settings.emb_dim, settings.emb_seed)
            .map_err(stage_err(stage))?;
        write_sidecars(&source, &records, &manifest.emb_dir).map_err(stage_err(stage))?;
        log_info(&format!("prep: wrote {} embedding sidecars", records.len()));
    }

    if manifest.splits_dir.is_none() {
        let dir = manifest.out_dir.join("splits");
        if !dir.join("fold1.train").exists() {
            let folds: Vec<FoldSplit> =
                make_folds(&records, settings.folds, mix_seed(manifest.seed, 0x0f01))
                    .map_err(stage_err(stage))?;
            write_folds(&folds, &dir).map_err(stage_err(stage))?;
            log_info(&format!("prep: wrote {} generated folds", settings.folds));
        }
    }
    Ok(())
}

fn run_train(manifest: &PipelineManifest, kind: ModelKind) -> Result<(), PipelineError> {
    let stage = match kind {
        ModelKind::Cldr => "train-cldr",
        ModelKind::Clner => "train-clner",
        ModelKind::Clgs => "train-clgs",
    };
    if !manifest.config_path.exists() {
        return Err(PipelineError::MissingInput {
            stage: stage.into(),
            artifact: manifest.config_path.display().to_string(),
        });
    }
    let config = TrainConfig::from_file(&manifest.config_path, kind, Some(kind.as_str()))
        .map_err(stage_err(stage))?;
    let loaded = load_fold_inputs(manifest, stage)?;
    let train_refs: Vec<&SentenceRecord> =
        loaded.train.iter().map(|&i| &loaded.records[i]).collect();
    let dir = stage_dir(manifest, if kind == ModelKind::Cldr { Stage::TrainCldr } else { Stage::TrainClner });
    train(&config, &train_refs, &loaded.source, Some(&dir)).map_err(stage_err(stage))?;
    Ok(())
}

fn load_model_for(
    stage: &str,
    dir: PathBuf,
    source: &EmbeddingSource,
) -> Result<TrainedModel, PipelineError> {
    if !dir.join("model.ckpt").exists() {
        return Err(PipelineError::MissingInput {
            stage: stage.into(),
            artifact: dir.join("model.ckpt").display().to_string(),
        });
    }
    load_trained(&dir, source).map_err(stage_err(stage))
}

fn run_extract(
    manifest: &PipelineManifest,
    settings: &PipelineSettings,
) -> Result<(), PipelineError> {
    let stage = "extract";
    let loaded = load_fold_inputs(manifest, stage)?;
    let cldr = load_model_for(stage, stage_dir(manifest, Stage::TrainCldr), &loaded.source)?;
    let clner =
        load_model_for(stage, stage_dir(manifest, Stage::TrainClner), &loaded.source)?;
    let TrainedModel::Cldr(cldr) = cldr else {
        return Err(PipelineError::Config("train-cldr produced a non-relation model".into()));
    };
    let TrainedModel::Clner(clner) = clner else {
        return Err(PipelineError::Config("train-clner produced a non-entity model".into()));
    };

    let train_refs: Vec<&SentenceRecord> =
        loaded.train.iter().map(|&i| &loaded.records[i]).collect();
    let (space_refs, val_refs) =
        split_validation(&train_refs, 0.10, mix_seed(manifest.seed, 0x0f02))
            .map_err(stage_err(stage))?;

    let fingerprint = loaded.source.fingerprint();
    let gold_mode = |salt: u64| ExtractionMode::GoldPairs {
        negatives_per_relation: settings.negatives_per_relation,
        seed: mix_seed(manifest.seed, salt),
    };

    let space_reps =
        extract_relation_reps(&cldr.encoder, &cldr.params, &space_refs, gold_mode(0x0f03))
            .map_err(stage_err(stage))?;
    let relation_space =
        relation_space_from(&space_reps, &fingerprint).map_err(stage_err(stage))?;
    let val_reps = extract_relation_reps(&cldr.encoder, &cldr.params, &val_refs, gold_mode(0x0f04))
        .map_err(stage_err(stage))?;
    let val_q: Vec<Vec<f64>> = val_reps.iter().map(|r| r.vector.clone()).collect();
    let val_l: Vec<SpaceLabel> = val_reps.iter().map(|r| r.label).collect();
    let k_relation = select_k(&relation_space, &val_q, &val_l, &settings.knn_grid, KnnMetric::Cosine)
        .map_err(stage_err(stage))?;

    let token_reps = extract_entity_reps(&clner.encoder, &clner.params, &space_refs)
        .map_err(stage_err(stage))?;
    let entity_space = entity_space_from(&token_reps, &fingerprint).map_err(stage_err(stage))?;
    let val_tokens = extract_entity_reps(&clner.encoder, &clner.params, &val_refs)
        .map_err(stage_err(stage))?;
    let ent_q: Vec<Vec<f64>> = val_tokens.iter().map(|t| t.vector.clone()).collect();
    let ent_l: Vec<SpaceLabel> = val_tokens.iter().map(|t| SpaceLabel::Tag(t.tag)).collect();
    let k_entity = select_k(&entity_space, &ent_q, &ent_l, &settings.knn_grid, KnnMetric::Cosine)
        .map_err(stage_err(stage))?;

    let dir = stage_dir(manifest, Stage::Extract);
    fs::create_dir_all(&dir).map_err(|e| PipelineError::Io(dir.display().to_string(), e.to_string()))?;
    write_space(&relation_space, &dir.join("relation.space")).map_err(stage_err(stage))?;
    write_space(&entity_space, &dir.join("entity.space")).map_err(stage_err(stage))?;
    fs::write(dir.join("selected.txt"), format!("k_relation = {k_relation}\nk_entity = {k_entity}\n"))
        .map_err(|e| PipelineError::Io(dir.display().to_string(), e.to_string()))?;
    log_info(&format!("extract: k_relation={k_relation} k_entity={k_entity}"));
    Ok(())
}

fn read_selected_k(path: &Path) -> Result<(usize, usize), PipelineError> {
    let text = fs::read_to_string(path)
        .map_err(|e| PipelineError::Io(path.display().to_string(), e.to_string()))?;
    let mut k_relation = None;
    let mut k_entity = None;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "k_relation" => k_relation = v.trim().parse().ok(),
                "k_entity" => k_entity = v.trim().parse().ok(),
                _ => {}
            }
        }
    }
    match (k_relation, k_entity) {
        (Some(r), Some(e)) => Ok((r, e)),
        _ => Err(PipelineError::Config(format!("malformed {}", path.display()))),
    }
}

fn run_knn(manifest: &PipelineManifest) -> Result<(), PipelineError> {
    let stage = "knn";
    let loaded = load_fold_inputs(manifest, stage)?;
    let extract_dir = stage_dir(manifest, Stage::Extract);
    for artifact in ["relation.space", "entity.space", "selected.txt"] {
        if !extract_dir.join(artifact).exists() {
            return Err(PipelineError::MissingInput {
                stage: stage.into(),
                artifact: extract_dir.join(artifact).display().to_string(),
            });
        }
    }
    let relation_space =
        crate::inference::space::load_space(&extract_dir.join("relation.space"))
            .map_err(stage_err(stage))?;
    let entity_space = crate::inference::space::load_space(&extract_dir.join("entity.space"))
        .map_err(stage_err(stage))?;
    let (k_relation, k_entity) = read_selected_k(&extract_dir.join("selected.txt"))?;

    let cldr = load_model_for(stage, stage_dir(manifest, Stage::TrainCldr), &loaded.source)?;
    let clner =
        load_model_for(stage, stage_dir(manifest, Stage::TrainClner), &loaded.source)?;
    let TrainedModel::Cldr(cldr) = cldr else {
        return Err(PipelineError::Config("train-cldr produced a non-relation model".into()));
    };
    let TrainedModel::Clner(clner) = clner else {
        return Err(PipelineError::Config("train-clner produced a non-entity model".into()));
    };

    let mut predictions = PredictionSet::default();
    for &index in &loaded.test {
        let record = &loaded.records[index];
        let one = [record];
        // relation side: every ordered candidate pair
        let reps =
            extract_relation_reps(&cldr.encoder, &cldr.params, &one, ExtractionMode::AllCandidatePairs)
                .map_err(stage_err(stage))?;
        let queries: Vec<Vec<f64>> = reps.iter().map(|r| r.vector.clone()).collect();
        let labels = knn_classify(
            &relation_space,
            &queries,
            &KnnConfig { k: k_relation, metric: KnnMetric::Cosine },
        )
        .map_err(stage_err(stage))?;
        let raw_pairs: Vec<(usize, usize)> = reps
            .iter()
            .zip(labels.iter())
            .filter(|(_, l)| **l == SpaceLabel::Relation)
            .map(|(r, _)| r.pair)
            .collect();

        // entity side: tag each token, then decode spans
        let token_reps = extract_entity_reps(&clner.encoder, &clner.params, &one)
            .map_err(stage_err(stage))?;
        let token_queries: Vec<Vec<f64>> = token_reps.iter().map(|t| t.vector.clone()).collect();
        let tag_labels = knn_classify(
            &entity_space,
            &token_queries,
            &KnnConfig { k: k_entity, metric: KnnMetric::Cosine },
        )
        .map_err(stage_err(stage))?;
        let tags: Vec<BioTag> = tag_labels
            .iter()
            .map(|l| match l {
                SpaceLabel::Tag(t) => *t,
                _ => BioTag::Outside,
            })
            .collect();
        let entities = decode_bio_with_repair(&tags);

        // conjunction of the two spaces
        let mut relations = Vec::new();
        for &(i, j) in &raw_pairs {
            let drug = entities
                .iter()
                .position(|s| s.entity_type == EntityType::Drug && s.end == i);
            let ae = entities
                .iter()
                .position(|s| s.entity_type == EntityType::Ae && s.end == j);
            if let (Some(d), Some(a)) = (drug, ae) {
                relations.push((d, a));
            }
        }
        relations.sort_unstable();
        relations.dedup();
        predictions.sentences.push(SentencePredictions {
            id: record.id.clone(),
            entities,
            relations,
            raw_pairs,
        });
    }
    let dir = stage_dir(manifest, Stage::Knn);
    fs::create_dir_all(&dir).map_err(|e| PipelineError::Io(dir.display().to_string(), e.to_string()))?;
    write_predictions(&predictions, &dir.join("predictions.txt")).map_err(stage_err(stage))?;
    Ok(())
}

fn run_score(manifest: &PipelineManifest) -> Result<BTreeMap<String, ScoreReport>, PipelineError> {
    let stage = "score";
    let loaded = load_fold_inputs(manifest, stage)?;
    let pred_path = stage_dir(manifest, Stage::Knn).join("predictions.txt");
    if !pred_path.exists() {
        return Err(PipelineError::MissingInput {
            stage: stage.into(),
            artifact: pred_path.display().to_string(),
        });
    }
    let predictions =
        crate::evaluation::report::load_predictions(&pred_path).map_err(stage_err(stage))?;
    let gold: Vec<SentenceRecord> =
        loaded.test.iter().map(|&i| loaded.records[i].clone()).collect();

    let mut scores = BTreeMap::new();
    scores.insert("ner".to_string(), score_ner(&gold, &predictions).map_err(stage_err(stage))?);
    scores.insert("re".to_string(), score_re_strict(&gold, &predictions).map_err(stage_err(stage))?);
    scores.insert(
        "re-minus".to_string(),
        score_re_minus(&gold, &predictions, false).map_err(stage_err(stage))?,
    );
    scores.insert(
        "re-minus-raw".to_string(),
        score_re_minus(&gold, &predictions, true).map_err(stage_err(stage))?,
    );

    let dir = stage_dir(manifest, Stage::Score);
    fs::create_dir_all(&dir).map_err(|e| PipelineError::Io(dir.display().to_string(), e.to_string()))?;
    let mut combined = String::new();
    for (name, report) in &scores {
        fs::write(dir.join(format!("report_{name}.txt")), report.to_text())
            .map_err(|e| PipelineError::Io(dir.display().to_string(), e.to_string()))?;
        combined.push_str(&format!(
            "{name}: precision {} recall {} f1 {}\n",
            report.score.precision, report.score.recall, report.score.f1
        ));
    }
    fs::write(dir.join("report.txt"), &combined)
        .map_err(|e| PipelineError::Io(dir.display().to_string(), e.to_string()))?;
    Ok(scores)
}

/// Run the requested stages in dependency order. On a stage failure a
/// `_FAILED` marker with the error is left in the stage directory.
pub fn run_pipeline(
    manifest: &PipelineManifest,
    stages: &[Stage],
) -> Result<PipelineReport, PipelineError> {
    fs::create_dir_all(&manifest.out_dir)
        .map_err(|e| PipelineError::Io(manifest.out_dir.display().to_string(), e.to_string()))?;
    fs::write(manifest.out_dir.join("manifest.txt"), manifest.to_text())
        .map_err(|e| PipelineError::Io(manifest.out_dir.display().to_string(), e.to_string()))?;
    let settings = if manifest.config_path.exists() {
        PipelineSettings::from_file(&manifest.config_path)?
    } else {
        PipelineSettings::default()
    };

    let mut ordered = stages.to_vec();
    ordered.sort_unstable();
    ordered.dedup();

    let mut report = PipelineReport { ran: Vec::new(), scores: BTreeMap::new() };
    for stage in ordered {
        let outcome = match stage {
            Stage::Prep => run_prep(manifest, &settings),
            Stage::TrainCldr => run_train(manifest, ModelKind::Cldr),
            Stage::TrainClner => run_train(manifest, ModelKind::Clner),
            Stage::Extract => run_extract(manifest, &settings),
            Stage::Knn => run_knn(manifest),
            Stage::Score => match run_score(manifest) {
                Ok(scores) => {
                    report.scores = scores;
                    Ok(())
                }
                Err(e) => Err(e),
            },
        };
        if let Err(error) = outcome {
            let dir = stage_dir(manifest, stage);
            let _ = fs::create_dir_all(&dir);
            let _ = fs::write(dir.join("_FAILED"), format!("{error}\n"));
            return Err(error);
        }
        report.ran.push(stage);
    }
    Ok(report)
}
