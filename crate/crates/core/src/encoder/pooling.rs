use crate::encoder::EncoderError;
use crate::numeric::tape::{NodeId, Tape};
use crate::numeric::Matrix;

/// How a set of token rows collapses to one sentence (or graph) vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolingMode {
    Mean,
    Max,
    /// The row of the sentence-start marker; requires the corpus to carry one.
    FirstToken,
}

impl PoolingMode {
    pub fn parse(s: &str) -> Result<Self, EncoderError> {
        match s {
            "mean" => Ok(PoolingMode::Mean),
            "max" => Ok(PoolingMode::Max),
            "first" | "first-token" => Ok(PoolingMode::FirstToken),
            other => Err(EncoderError::Sidecar(format!("unknown pooling mode `{other}`"))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            PoolingMode::Mean => "mean",
            PoolingMode::Max => "max",
            PoolingMode::FirstToken => "first",
        }
    }
}

fn unmasked_rows(rows: usize, mask: Option<&[bool]>) -> Result<Vec<usize>, EncoderError> {
    let kept: Vec<usize> = match mask {
        None => (0..rows).collect(),
        Some(m) => (0..rows).filter(|&r| *m.get(r).unwrap_or(&false)).collect(),
    };
    if kept.is_empty() {
        return Err(EncoderError::FullyMasked);
    }
    Ok(kept)
}

/// Pool rows of a matrix into a single row vector.
pub fn pool(matrix: &Matrix, mode: PoolingMode, mask: Option<&[bool]>) -> Result<Vec<f64>, EncoderError> {
    let kept = unmasked_rows(matrix.rows(), mask)?;
    let cols = matrix.cols();
    match mode {
        PoolingMode::Mean => {
            let mut out = vec![0.0; cols];
            for &r in &kept {
                for (c, slot) in out.iter_mut().enumerate() {
                    *slot += matrix.get(r, c);
                }
            }
            let inv = 1.0 / kept.len() as f64;
            out.iter_mut().for_each(|v| *v *= inv);
            Ok(out)
        }
        PoolingMode::Max => {
            let mut out = vec![f64::NEG_INFINITY; cols];
            for &r in &kept {
                for (c, slot) in out.iter_mut().enumerate() {
                    *slot = slot.max(matrix.get(r, c));
                }
            }
            Ok(out)
        }
        PoolingMode::FirstToken => Ok(matrix.row(kept[0]).to_vec()),
    }
}

/// Tape version of [`pool`]: differentiable through the kept rows.
pub fn pool_on_tape(
    tape: &mut Tape,
    rows_node: NodeId,
    mode: PoolingMode,
    mask: Option<&[bool]>,
) -> Result<NodeId, EncoderError> {
    let rows = tape.value(rows_node).rows();
    let kept = unmasked_rows(rows, mask)?;
    let selected = if kept.len() == rows {
        rows_node
    } else {
        tape.select_rows(rows_node, kept.clone())?
    };
    let pooled = match mode {
        PoolingMode::Mean => tape.mean_rows(selected)?,
        PoolingMode::Max => tape.max_rows(selected)?,
        PoolingMode::FirstToken => tape.select_rows(selected, vec![0])?,
    };
    Ok(pooled)
}
