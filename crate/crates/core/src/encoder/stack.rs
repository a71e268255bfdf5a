//! The text-encoder stand-in: a frozen base embedding table under trainable
//! dense head layers, optionally preceded by one self-attention-style
//! context mixing layer.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::record::SentenceRecord;
use crate::encoder::source::EmbeddingSource;
use crate::encoder::EncoderError;
use crate::numeric::tape::{NodeId, Tape};
use crate::numeric::{Matrix, ParamId, ParamSet};

#[derive(Debug, Clone, Copy)]
pub struct DenseLayer {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Scaled dot-product mixing with a residual connection, so tokens can see
/// their sentence context before the dense head.
#[derive(Debug, Clone, Copy)]
pub struct ContextMixer {
    pub query: ParamId,
    pub key: ParamId,
    pub value: ParamId,
}

/// Frozen base plus trainable head. The base never enters the parameter set,
/// so no optimizer step can touch it.
#[derive(Debug, Clone)]
pub struct EncoderStack {
    pub base: EmbeddingSource,
    pub mixer: Option<ContextMixer>,
    pub head: Vec<DenseLayer>,
    pub output_dim: usize,
}

impl EncoderStack {
    /// Build a stack with `head_layers` dense F->F layers, registering the
    /// trainable weights in `params` under `prefix`.
    pub fn new(
        base: EmbeddingSource,
        head_layers: usize,
        use_mixer: bool,
        params: &mut ParamSet,
        prefix: &str,
        seed: u64,
    ) -> Self {
        let dim = base.dimension;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut init = |rows: usize, cols: usize, scale: f64| {
            let data: Vec<f64> =
                (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect();
            Matrix::from_vec(rows, cols, data).expect("init shape")
        };
        let glorot = (6.0 / (dim as f64 + dim as f64)).sqrt();
        let mixer = use_mixer.then(|| ContextMixer {
            query: params.add_trainable(&format!("{prefix}.mixer.query"), init(dim, dim, glorot)),
            key: params.add_trainable(&format!("{prefix}.mixer.key"), init(dim, dim, glorot)),
            value: params.add_trainable(&format!("{prefix}.mixer.value"), init(dim, dim, glorot)),
        });
        let head = (0..head_layers)
            .map(|l| DenseLayer {
                weight: params
                    .add_trainable(&format!("{prefix}.head{l}.weight"), init(dim, dim, glorot)),
                bias: params.add_trainable(&format!("{prefix}.head{l}.bias"), Matrix::zeros(1, dim)),
            })
            .collect();
        EncoderStack { base, mixer, head, output_dim: dim }
    }

    /// Contextual representation of every real token, as a tape node with
    /// one row per token. Gradients flow into head (and mixer) weights only.
    pub fn embed_on_tape(
        &self,
        params: &ParamSet,
        tape: &mut Tape,
        record: &SentenceRecord,
    ) -> Result<NodeId, EncoderError> {
        let base_rows = self.base.record_matrix(record)?.clone();
        let mut x = tape.constant(base_rows);
        if let Some(mixer) = &self.mixer {
            let wq = tape.param(params, mixer.query);
            let wk = tape.param(params, mixer.key);
            let wv = tape.param(params, mixer.value);
            let q = tape.matmul(x, wq)?;
            let k = tape.matmul(x, wk)?;
            let v = tape.matmul(x, wv)?;
            let kt = tape.transpose(k);
            let scores = tape.matmul(q, kt)?;
            let scaled = tape.scale(scores, 1.0 / (self.output_dim as f64).sqrt());
            let attn = tape.softmax_rows(scaled);
            let mixed = tape.matmul(attn, v)?;
            x = tape.add(x, mixed)?;
        }
        for layer in &self.head {
            let w = tape.param(params, layer.weight);
            let b = tape.param(params, layer.bias);
            let h = tape.matmul(x, w)?;
            let h = tape.add_row_broadcast(h, b)?;
            x = tape.relu(h);
        }
        Ok(x)
    }

    /// Forward-only evaluation of [`Self::embed_on_tape`].
    pub fn embed_sentence(
        &self,
        params: &ParamSet,
        record: &SentenceRecord,
    ) -> Result<Matrix, EncoderError> {
        let mut tape = Tape::new();
        let node = self.embed_on_tape(params, &mut tape, record)?;
        Ok(tape.value(node).clone())
    }
}
