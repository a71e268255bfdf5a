//! Training configuration: a flat `key = value` text document. Unknown keys
//! are rejected so typos cannot silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::encoder::PoolingMode;
use crate::training::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Clgs,
    Cldr,
    Clner,
}

impl ModelKind {
    pub fn parse(s: &str) -> Result<Self, TrainingError> {
        match s {
            "clgs" => Ok(ModelKind::Clgs),
            "cldr" => Ok(ModelKind::Cldr),
            "clner" => Ok(ModelKind::Clner),
            other => Err(TrainingError::Config(format!("unknown model kind `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::Clgs => "clgs",
            ModelKind::Cldr => "cldr",
            ModelKind::Clner => "clner",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub temperature: f64,
    /// Self-loop weight of disjoint-graph adjacencies (CLDR).
    pub self_loop_weight: f64,
    /// Candidate count per contrastive comparison: one positive plus
    /// `candidate_count - 1` sampled negatives.
    pub candidate_count: usize,
    pub seed: u64,
    pub graph_pool: PoolingMode,
    pub text_pool: PoolingMode,
    pub validation_fraction: f64,
    pub head_layers: usize,
    pub use_mixer: bool,
    pub projection: bool,
    pub symmetric: bool,
    /// CLNER sampling: anchors per tag class per batch.
    pub entity_quota: usize,
    /// CLNER sampling: positives per anchor.
    pub entity_positives: usize,
    /// CLNER sampling: total candidates per anchor.
    pub entity_candidates: usize,
}

impl TrainConfig {
    /// Reference defaults per model kind: batch size 8 (16 for the
    /// token-level model), learning rate 1e-5, self-loop weight 0.8,
    /// validation fraction 0.10.
    pub fn defaults(model: ModelKind) -> Self {
        TrainConfig {
            model,
            batch_size: if model == ModelKind::Clner { 16 } else { 8 },
            learning_rate: 1e-5,
            epochs: 30,
            temperature: 0.1,
            self_loop_weight: 0.8,
            candidate_count: 8,
            seed: 1,
            graph_pool: PoolingMode::Mean,
            text_pool: PoolingMode::Mean,
            validation_fraction: 0.10,
            head_layers: if model == ModelKind::Clner { 1 } else { 2 },
            use_mixer: false,
            projection: false,
            symmetric: false,
            entity_quota: 8,
            entity_positives: 2,
            entity_candidates: 8,
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        if self.batch_size == 0 {
            return Err(TrainingError::Config("batch_size must be at least 1".into()));
        }
        if self.temperature <= 0.0 {
            return Err(TrainingError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(TrainingError::Config(format!(
                "validation_fraction must lie in (0,1), got {}",
                self.validation_fraction
            )));
        }
        if self.candidate_count == 0 {
            return Err(TrainingError::Config("candidate_count must be at least 1".into()));
        }
        if self.epochs == 0 {
            return Err(TrainingError::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Parse from `key = value` lines. `prefix` selects scoped keys: with
    /// prefix `cldr`, a `cldr.epochs` line overrides a plain `epochs` line
    /// and other models' scoped keys are ignored.
    pub fn from_text(text: &str, model: ModelKind, prefix: Option<&str>) -> Result<Self, TrainingError> {
        let mut plain: BTreeMap<String, String> = BTreeMap::new();
        let mut scoped: BTreeMap<String, String> = BTreeMap::new();
        let known_scopes = ["clgs", "cldr", "clner"];
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                TrainingError::Config(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            match key.split_once('.') {
                Some((scope, rest)) if known_scopes.contains(&scope) => {
                    if Some(scope) == prefix {
                        scoped.insert(rest.to_string(), value);
                    }
                }
                _ => {
                    plain.insert(key, value);
                }
            }
        }
        plain.extend(scoped);
        let mut config = TrainConfig::defaults(model);
        for (key, value) in &plain {
            let bad = |what: &str| {
                TrainingError::Config(format!("key `{key}`: cannot parse `{value}` as {what}"))
            };
            match key.as_str() {
                "model" => config.model = ModelKind::parse(value)?,
                "batch_size" => config.batch_size = value.parse().map_err(|_| bad("integer"))?,
                "learning_rate" => {
                    config.learning_rate = value.parse().map_err(|_| bad("real"))?
                }
                "epochs" => config.epochs = value.parse().map_err(|_| bad("integer"))?,
                "temperature" => config.temperature = value.parse().map_err(|_| bad("real"))?,
                "self_loop_weight" => {
                    config.self_loop_weight = value.parse().map_err(|_| bad("real"))?
                }
                "candidate_count" => {
                    config.candidate_count = value.parse().map_err(|_| bad("integer"))?
                }
                "seed" => config.seed = value.parse().map_err(|_| bad("integer"))?,
                "graph_pool" => config.graph_pool = PoolingMode::parse(value)?,
                "text_pool" => config.text_pool = PoolingMode::parse(value)?,
                "validation_fraction" => {
                    config.validation_fraction = value.parse().map_err(|_| bad("real"))?
                }
                "head_layers" => config.head_layers = value.parse().map_err(|_| bad("integer"))?,
                "use_mixer" => config.use_mixer = value.parse().map_err(|_| bad("bool"))?,
                "projection" => config.projection = value.parse().map_err(|_| bad("bool"))?,
                "symmetric" => config.symmetric = value.parse().map_err(|_| bad("bool"))?,
                "entity_quota" => config.entity_quota = value.parse().map_err(|_| bad("integer"))?,
                "entity_positives" => {
                    config.entity_positives = value.parse().map_err(|_| bad("integer"))?
                }
                "entity_candidates" => {
                    config.entity_candidates = value.parse().map_err(|_| bad("integer"))?
                }
                // pipeline-level keys that may share the file
                "emb_dim" | "emb_seed" | "synth_sentences" | "synth_seed" | "synth_density"
                | "folds" | "fold" | "knn_grid" | "negatives_per_relation" => {}
                other => {
                    return Err(TrainingError::Config(format!("unknown config key `{other}`")))
                }
            }
        }
        // the explicitly requested kind wins over a `model` key, so one
        // config file can drive several tools
        config.model = model;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path, model: ModelKind, prefix: Option<&str>) -> Result<Self, TrainingError> {
        let text = fs::read_to_string(path)
            .map_err(|e| TrainingError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_text(&text, model, prefix)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model = {}\n", self.model));
        out.push_str(&format!("batch_size = {}\n", self.batch_size));
        out.push_str(&format!("learning_rate = {}\n", self.learning_rate));
        out.push_str(&format!("epochs = {}\n", self.epochs));
        out.push_str(&format!("temperature = {}\n", self.temperature));
        out.push_str(&format!("self_loop_weight = {}\n", self.self_loop_weight));
        out.push_str(&format!("candidate_count = {}\n", self.candidate_count));
        out.push_str(&format!("seed = {}\n", self.seed));
        out.push_str(&format!("graph_pool = {}\n", self.graph_pool.as_str()));
        out.push_str(&format!("text_pool = {}\n", self.text_pool.as_str()));
        out.push_str(&format!("validation_fraction = {}\n", self.validation_fraction));
        out.push_str(&format!("head_layers = {}\n", self.head_layers));
        out.push_str(&format!("use_mixer = {}\n", self.use_mixer));
        out.push_str(&format!("projection = {}\n", self.projection));
        out.push_str(&format!("symmetric = {}\n", self.symmetric));
        out.push_str(&format!("entity_quota = {}\n", self.entity_quota));
        out.push_str(&format!("entity_positives = {}\n", self.entity_positives));
        out.push_str(&format!("entity_candidates = {}\n", self.entity_candidates));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_defaults_per_model_kind() {
        let clgs = TrainConfig::defaults(ModelKind::Clgs);
        assert_eq!(clgs.batch_size, 8);
        assert_eq!(clgs.learning_rate, 1e-5);
        let clner = TrainConfig::defaults(ModelKind::Clner);
        assert_eq!(clner.batch_size, 16);
        assert_eq!(clner.validation_fraction, 0.10);
    }

    #[test]
    fn scoped_keys_override_plain_keys() {
        let text = "epochs = 10\ncldr.epochs = 25\nclner.epochs = 3\n";
        let cldr = TrainConfig::from_text(text, ModelKind::Cldr, Some("cldr")).unwrap();
        assert_eq!(cldr.epochs, 25);
        let clner = TrainConfig::from_text(text, ModelKind::Clner, Some("clner")).unwrap();
        assert_eq!(clner.epochs, 3);
        let clgs = TrainConfig::from_text(text, ModelKind::Clgs, Some("clgs")).unwrap();
        assert_eq!(clgs.epochs, 10);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(TrainConfig::from_text("learn_rate = 0.1\n", ModelKind::Cldr, None).is_err());
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(TrainConfig::from_text("temperature = 0\n", ModelKind::Cldr, None).is_err());
        assert!(TrainConfig::from_text("batch_size = 0\n", ModelKind::Cldr, None).is_err());
        assert!(
            TrainConfig::from_text("validation_fraction = 1.0\n", ModelKind::Cldr, None).is_err()
        );
    }

    #[test]
    fn round_trip_through_text() {
        let config = TrainConfig::defaults(ModelKind::Cldr);
        let parsed = TrainConfig::from_text(&config.to_text(), ModelKind::Cldr, None).unwrap();
        assert_eq!(parsed.to_text(), config.to_text());
    }
}
