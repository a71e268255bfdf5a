//! Parameter checkpoints: a flat text file of named matrices with shapes.
//! Values are written in shortest round-trip decimal form, so a load after a
//! save reproduces every f64 bit-exactly.

use std::fs;
use std::path::Path;

use crate::numeric::matrix::Matrix;
use crate::numeric::param::ParamSet;
use crate::numeric::NumericError;

const HEADER: &str = "relcl-checkpoint v1";

pub fn save_checkpoint(params: &ParamSet, path: &Path) -> Result<(), NumericError> {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("params {}\n", params.len()));
    for (_, p) in params.iter() {
        out.push_str(&format!(
            "name {}\nshape {} {}\ntrainable {}\n",
            p.name,
            p.value.rows(),
            p.value.cols(),
            p.trainable
        ));
        for r in 0..p.value.rows() {
            let row: Vec<String> = p.value.row(r).iter().map(|v| format!("{v}")).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| NumericError::Io(path.display().to_string(), e.to_string()))
}

pub fn load_checkpoint(path: &Path) -> Result<ParamSet, NumericError> {
    let text = fs::read_to_string(path)
        .map_err(|e| NumericError::Io(path.display().to_string(), e.to_string()))?;
    let mut lines = text.lines();
    let bad = |msg: &str| NumericError::Checkpoint(format!("{}: {}", path.display(), msg));

    if lines.next() != Some(HEADER) {
        return Err(bad("missing or unsupported header"));
    }
    let count_line = lines.next().ok_or_else(|| bad("missing parameter count"))?;
    let count: usize = count_line
        .strip_prefix("params ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("malformed parameter count"))?;

    let mut params = ParamSet::new();
    for _ in 0..count {
        let name = lines
            .next()
            .and_then(|l| l.strip_prefix("name "))
            .ok_or_else(|| bad("missing name line"))?
            .to_string();
        let shape = lines
            .next()
            .and_then(|l| l.strip_prefix("shape "))
            .ok_or_else(|| bad("missing shape line"))?;
        let mut it = shape.split_whitespace();
        let rows: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed shape"))?;
        let cols: usize = it
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("malformed shape"))?;
        let trainable: bool = lines
            .next()
            .and_then(|l| l.strip_prefix("trainable "))
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing trainable line"))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let line = lines.next().ok_or_else(|| bad("truncated matrix rows"))?;
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| bad("malformed matrix entry"))?;
                data.push(v);
            }
        }
        if data.len() != rows * cols {
            return Err(bad("matrix entry count does not match shape"));
        }
        let value = Matrix::from_vec(rows, cols, data)?;
        if trainable {
            params.add_trainable(&name, value);
        } else {
            params.add_frozen(&name, value);
        }
    }
    Ok(params)
}
