//! Model manifest: the architecture and hyperparameters a checkpoint was
//! trained with, plus the embedding-source fingerprint it is tied to.

use std::fs;
use std::path::Path;

use crate::encoder::source::EmbeddingSource;
use crate::encoder::PoolingMode;
use crate::training::config::{ModelKind, TrainConfig};
use crate::training::TrainingError;

#[derive(Debug, Clone)]
pub struct ModelManifest {
    pub model: ModelKind,
    pub dimension: usize,
    pub head_layers: usize,
    pub use_mixer: bool,
    pub projection: bool,
    pub symmetric: bool,
    pub graph_pool: PoolingMode,
    pub text_pool: PoolingMode,
    pub temperature: f64,
    pub self_loop_weight: f64,
    pub seed: u64,
    pub best_epoch: usize,
    pub source_fingerprint: String,
}

impl ModelManifest {
    pub fn for_model(config: &TrainConfig, source: &EmbeddingSource, best_epoch: usize) -> Self {
        ModelManifest {
            model: config.model,
            dimension: source.dimension,
            head_layers: match config.model {
                ModelKind::Clner => 1,
                _ => config.head_layers,
            },
            use_mixer: config.use_mixer,
            projection: config.projection,
            symmetric: config.symmetric,
            graph_pool: config.graph_pool,
            text_pool: config.text_pool,
            temperature: config.temperature,
            self_loop_weight: config.self_loop_weight,
            seed: config.seed,
            best_epoch,
            source_fingerprint: source.fingerprint(),
        }
    }

    /// The TrainConfig slice needed to rebuild the architecture (training
    /// schedule fields keep their defaults).
    pub fn to_config(&self) -> Result<TrainConfig, TrainingError> {
        let mut config = TrainConfig::defaults(self.model);
        config.head_layers = self.head_layers;
        config.use_mixer = self.use_mixer;
        config.projection = self.projection;
        config.symmetric = self.symmetric;
        config.graph_pool = self.graph_pool;
        config.text_pool = self.text_pool;
        config.temperature = self.temperature;
        config.self_loop_weight = self.self_loop_weight;
        config.seed = self.seed;
        Ok(config)
    }

    pub fn to_text(&self) -> String {
        format!(
            "relcl-manifest v1\nmodel = {}\ndimension = {}\nhead_layers = {}\nuse_mixer = {}\n\
             projection = {}\nsymmetric = {}\ngraph_pool = {}\ntext_pool = {}\ntemperature = {}\n\
             self_loop_weight = {}\nseed = {}\nbest_epoch = {}\nsource_fingerprint = {}\n",
            self.model,
            self.dimension,
            self.head_layers,
            self.use_mixer,
            self.projection,
            self.symmetric,
            self.graph_pool.as_str(),
            self.text_pool.as_str(),
            self.temperature,
            self.self_loop_weight,
            self.seed,
            self.best_epoch,
            self.source_fingerprint
        )
    }

    pub fn from_text(text: &str) -> Result<Self, TrainingError> {
        let mut lines = text.lines();
        if lines.next() != Some("relcl-manifest v1") {
            return Err(TrainingError::Config("missing manifest header".into()));
        }
        let mut map = std::collections::BTreeMap::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| TrainingError::Config(format!("malformed manifest line `{line}`")))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| {
            map.get(key)
                .cloned()
                .ok_or_else(|| TrainingError::Config(format!("manifest missing `{key}`")))
        };
        let parse_err =
            |key: &str| TrainingError::Config(format!("manifest key `{key}` unparsable"));
        Ok(ModelManifest {
            model: ModelKind::parse(&get("model")?)?,
            dimension: get("dimension")?.parse().map_err(|_| parse_err("dimension"))?,
            head_layers: get("head_layers")?.parse().map_err(|_| parse_err("head_layers"))?,
            use_mixer: get("use_mixer")?.parse().map_err(|_| parse_err("use_mixer"))?,
            projection: get("projection")?.parse().map_err(|_| parse_err("projection"))?,
            symmetric: get("symmetric")?.parse().map_err(|_| parse_err("symmetric"))?,
            graph_pool: PoolingMode::parse(&get("graph_pool")?)?,
            text_pool: PoolingMode::parse(&get("text_pool")?)?,
            temperature: get("temperature")?.parse().map_err(|_| parse_err("temperature"))?,
            self_loop_weight: get("self_loop_weight")?
                .parse()
                .map_err(|_| parse_err("self_loop_weight"))?,
            seed: get("seed")?.parse().map_err(|_| parse_err("seed"))?,
            best_epoch: get("best_epoch")?.parse().map_err(|_| parse_err("best_epoch"))?,
            source_fingerprint: get("source_fingerprint")?,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, TrainingError> {
        let text = fs::read_to_string(path)
            .map_err(|e| TrainingError::Io(path.display().to_string(), e.to_string()))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_corpus, SynthConfig};
    use crate::encoder::source::synth_embeddings;

    #[test]
    fn manifest_round_trips() {
        let records =
            synth_corpus(&SynthConfig { sentences: 4, seed: 1, ..SynthConfig::default() }).unwrap();
        let source = synth_embeddings(&records, 8, 1).unwrap();
        let config = TrainConfig::defaults(ModelKind::Cldr);
        let manifest = ModelManifest::for_model(&config, &source, 7);
        let parsed = ModelManifest::from_text(&manifest.to_text()).unwrap();
        assert_eq!(parsed.to_text(), manifest.to_text());
        assert_eq!(parsed.best_epoch, 7);
        assert_eq!(parsed.source_fingerprint, source.fingerprint());
    }
}
