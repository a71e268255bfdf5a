//! Frozen per-token embeddings: loaded from sidecar files exported by an
//! external pretrained encoder, or generated deterministically for
//! desk-scale runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::record::SentenceRecord;
use crate::encoder::EncoderError;
use crate::numeric::Matrix;
use crate::util::{fnv1a, mix_seed};

const SIDECAR_HEADER: &str = "relcl-embedding v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    FileLoaded,
    Synthetic,
}

/// Frozen base embeddings: one matrix per record with a row per real token.
/// Never updated by training.
#[derive(Debug, Clone)]
pub struct EmbeddingSource {
    pub mode: SourceMode,
    pub dimension: usize,
    per_record: BTreeMap<String, Matrix>,
}

impl EmbeddingSource {
    pub fn record_matrix(&self, record: &SentenceRecord) -> Result<&Matrix, EncoderError> {
        let m = self
            .per_record
            .get(&record.id)
            .ok_or_else(|| EncoderError::MissingRecord(record.id.clone()))?;
        if m.rows() != record.tokens.len() {
            return Err(EncoderError::RowMismatch {
                id: record.id.clone(),
                rows: m.rows(),
                tokens: record.tokens.len(),
            });
        }
        Ok(m)
    }

    pub fn record_ids(&self) -> impl Iterator<Item = &String> {
        self.per_record.keys()
    }

    pub fn len(&self) -> usize {
        self.per_record.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_record.is_empty()
    }

    /// FNV-1a digest over dimension, ids and value bits: ties model
    /// checkpoints to the exact base they were trained on.
    pub fn fingerprint(&self) -> String {
        let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                hash ^= b as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(&(self.dimension as u64).to_le_bytes());
        for (id, m) in &self.per_record {
            eat(id.as_bytes());
            eat(&(m.rows() as u64).to_le_bytes());
            for v in m.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        format!("{hash:016x}")
    }
}

/// Options for the synthetic embedding table.
#[derive(Debug, Clone, Copy)]
pub struct SynthEmbeddingOptions {
    /// Per-instance jitter radius. Small enough that two instances of the
    /// same word keep cosine similarity above 0.9.
    pub jitter: f64,
}

impl Default for SynthEmbeddingOptions {
    fn default() -> Self {
        SynthEmbeddingOptions { jitter: 0.02 }
    }
}

/// Deterministic pseudo-random unit vector per vocabulary type, plus a
/// small positional jitter per token instance.
pub fn synth_embeddings(
    corpus: &[SentenceRecord],
    dimension: usize,
    seed: u64,
) -> Result<EmbeddingSource, EncoderError> {
    synth_embeddings_with(corpus, dimension, seed, SynthEmbeddingOptions::default())
}

pub fn synth_embeddings_with(
    corpus: &[SentenceRecord],
    dimension: usize,
    seed: u64,
    options: SynthEmbeddingOptions,
) -> Result<EmbeddingSource, EncoderError> {
    if dimension < 2 {
        return Err(EncoderError::BadDimension(dimension));
    }
    let mut type_vectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for record in corpus {
        for token in &record.tokens {
            type_vectors
                .entry(token.clone())
                .or_insert_with(|| unit_vector(dimension, mix_seed(seed, fnv1a(token.as_bytes()))));
        }
    }
    let mut per_record = BTreeMap::new();
    for record in corpus {
        let mut rows = Vec::with_capacity(record.tokens.len());
        for (pos, token) in record.tokens.iter().enumerate() {
            let base = &type_vectors[token];
            let jitter_seed = mix_seed(mix_seed(seed, fnv1a(record.id.as_bytes())), pos as u64);
            let noise = unit_vector(dimension, jitter_seed);
            let row: Vec<f64> = base
                .iter()
                .zip(noise.iter())
                .map(|(b, n)| b + options.jitter * n)
                .collect();
            rows.push(row);
        }
        per_record.insert(record.id.clone(), Matrix::from_rows(&rows)?);
    }
    Ok(EmbeddingSource { mode: SourceMode::Synthetic, dimension, per_record })
}

fn unit_vector(dimension: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Box-Muller pairs give a rotation-invariant direction
    let mut v = Vec::with_capacity(dimension);
    while v.len() < dimension {
        let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.random_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        v.push(r * theta.cos());
        if v.len() < dimension {
            v.push(r * theta.sin());
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// Write one sidecar file per record: id, dimension, then the row-major
/// matrix in shortest round-trip decimal form. If the record has relations,
/// the normalized subgraph adjacency is appended for external consumers.
pub fn write_sidecars(
    source: &EmbeddingSource,
    corpus: &[SentenceRecord],
    dir: &Path,
) -> Result<(), EncoderError> {
    fs::create_dir_all(dir).map_err(|e| EncoderError::Io(dir.display().to_string(), e.to_string()))?;
    for record in corpus {
        let m = source.record_matrix(record)?;
        let mut out = String::new();
        out.push_str(SIDECAR_HEADER);
        out.push('\n');
        out.push_str(&format!("id: {}\n", record.id));
        out.push_str(&format!("dim: {}\n", source.dimension));
        out.push_str(&format!("rows: {}\n", m.rows()));
        for r in 0..m.rows() {
            let row: Vec<String> = m.row(r).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        if record.has_relations() {
            let graph = crate::graphs::build_subgraph(record, m)
                .and_then(|g| Ok((g.node_token_indices.clone(), g.normalized_adjacency()?)));
            if let Ok((nodes, adj)) = graph {
                let nodes: Vec<String> = nodes.iter().map(|n| n.to_string()).collect();
                out.push_str(&format!("nodes: {}\n", nodes.join(" ")));
                out.push_str(&format!("adjacency: {}\n", adj.rows()));
                for r in 0..adj.rows() {
                    let row: Vec<String> = adj.row(r).iter().map(|v| format!("{v}")).collect();
                    out.push_str(&row.join(" "));
                    out.push('\n');
                }
            }
        }
        let path = dir.join(format!("{}.emb", record.id));
        fs::write(&path, out)
            .map_err(|e| EncoderError::Io(path.display().to_string(), e.to_string()))?;
    }
    Ok(())
}

/// Load sidecar files for the given records.
pub fn load_sidecars(
    corpus: &[SentenceRecord],
    dir: &Path,
) -> Result<EmbeddingSource, EncoderError> {
    let mut per_record = BTreeMap::new();
    let mut dimension = None;
    for record in corpus {
        let path = dir.join(format!("{}.emb", record.id));
        let text = fs::read_to_string(&path)
            .map_err(|_| EncoderError::MissingRecord(record.id.clone()))?;
        let bad =
            |msg: &str| EncoderError::Sidecar(format!("{}: {}", path.display(), msg));
        let mut lines = text.lines();
        if lines.next() != Some(SIDECAR_HEADER) {
            return Err(bad("missing or unsupported header"));
        }
        let id = lines
            .next()
            .and_then(|l| l.strip_prefix("id: "))
            .ok_or_else(|| bad("missing id"))?;
        if id != record.id {
            return Err(bad(&format!("id `{id}` does not match record `{}`", record.id)));
        }
        let dim: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("dim: "))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing dim"))?;
        let rows: usize = lines
            .next()
            .and_then(|l| l.strip_prefix("rows: "))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing rows"))?;
        match dimension {
            None => dimension = Some(dim),
            Some(d) if d != dim => {
                return Err(bad(&format!("dimension {dim} differs from corpus dimension {d}")))
            }
            _ => {}
        }
        let mut data = Vec::with_capacity(rows * dim);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated matrix"))?;
            for tok in line.split_whitespace() {
                data.push(tok.parse::<f64>().map_err(|_| bad("malformed value"))?);
            }
        }
        if data.len() != rows * dim {
            return Err(bad("matrix entries do not match dim/rows"));
        }
        per_record.insert(record.id.clone(), Matrix::from_vec(rows, dim, data)?);
    }
    let dimension = dimension.ok_or_else(|| EncoderError::Sidecar("no records".into()))?;
    Ok(EmbeddingSource { mode: SourceMode::FileLoaded, dimension, per_record })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::synth::{synth_corpus, SynthConfig};
    use crate::numeric::cosine_similarity;

    fn corpus() -> Vec<SentenceRecord> {
        synth_corpus(&SynthConfig { sentences: 12, seed: 4, ..SynthConfig::default() }).unwrap()
    }

    #[test]
    fn same_token_type_across_sentences_stays_similar() {
        let records = corpus();
        let source = synth_embeddings(&records, 16, 7).unwrap();
        // the start marker occurs in every sentence
        let a = source.record_matrix(&records[0]).unwrap().row(0).to_vec();
        let b = source.record_matrix(&records[1]).unwrap().row(0).to_vec();
        assert!(cosine_similarity(&a, &b).unwrap() > 0.9);
    }

    #[test]
    fn different_seeds_give_different_tables() {
        let records = corpus();
        let a = synth_embeddings(&records, 8, 1).unwrap();
        let b = synth_embeddings(&records, 8, 2).unwrap();
        assert_ne!(
            a.record_matrix(&records[0]).unwrap().data(),
            b.record_matrix(&records[0]).unwrap().data()
        );
        assert_ne!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn minimum_dimension_is_honored() {
        let records = corpus();
        assert!(synth_embeddings(&records, 1, 1).is_err());
        let source = synth_embeddings(&records, 2, 1).unwrap();
        assert_eq!(source.record_matrix(&records[0]).unwrap().cols(), 2);
    }

    #[test]
    fn sidecar_round_trip_is_bit_exact() {
        let records = corpus();
        let source = synth_embeddings(&records, 6, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_sidecars(&source, &records, dir.path()).unwrap();
        let loaded = load_sidecars(&records, dir.path()).unwrap();
        assert_eq!(loaded.mode, SourceMode::FileLoaded);
        assert_eq!(loaded.dimension, 6);
        assert_eq!(loaded.fingerprint(), source.fingerprint());
        for r in &records {
            let a = source.record_matrix(r).unwrap();
            let b = loaded.record_matrix(r).unwrap();
            let ab: Vec<u64> = a.data().iter().map(|v| v.to_bits()).collect();
            let bb: Vec<u64> = b.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(ab, bb);
        }
    }

    #[test]
    fn missing_sidecar_names_the_record() {
        let records = corpus();
        let dir = tempfile::tempdir().unwrap();
        match load_sidecars(&records, dir.path()) {
            Err(EncoderError::MissingRecord(id)) => assert_eq!(id, records[0].id),
            other => panic!("expected missing record, got {other:?}"),
        }
    }
}
