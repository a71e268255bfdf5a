//! Cross-validation folds: seeded generation plus loading of externally
//! published split files.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::record::SentenceRecord;
use crate::corpus::CorpusError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    /// 1-based fold index.
    pub fold_index: usize,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl FoldSplit {
    pub fn select<'a>(
        &self,
        records: &'a [SentenceRecord],
    ) -> (Vec<&'a SentenceRecord>, Vec<&'a SentenceRecord>) {
        let train: Vec<&SentenceRecord> = self
            .train_ids
            .iter()
            .filter_map(|id| records.iter().find(|r| &r.id == id))
            .collect();
        let test: Vec<&SentenceRecord> = self
            .test_ids
            .iter()
            .filter_map(|id| records.iter().find(|r| &r.id == id))
            .collect();
        (train, test)
    }
}

/// Deterministically split a corpus into `n` folds whose test sides differ in
/// size by at most one record.
pub fn make_folds(
    records: &[SentenceRecord],
    n: usize,
    seed: u64,
) -> Result<Vec<FoldSplit>, CorpusError> {
    if n < 2 {
        return Err(CorpusError::BadFoldCount { n, corpus: records.len() });
    }
    if records.is_empty() || n > records.len() {
        return Err(CorpusError::BadFoldCount { n, corpus: records.len() });
    }
    let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ids.shuffle(&mut rng);

    let mut folds = Vec::with_capacity(n);
    for k in 0..n {
        let test_ids: Vec<String> = ids
            .iter()
            .enumerate()
            .filter(|(i, _)| i % n == k)
            .map(|(_, id)| id.to_string())
            .collect();
        let train_ids: Vec<String> = ids
            .iter()
            .enumerate()
            .filter(|(i, _)| i % n != k)
            .map(|(_, id)| id.to_string())
            .collect();
        folds.push(FoldSplit { fold_index: k + 1, train_ids, test_ids });
    }
    Ok(folds)
}

/// Load published splits from a directory of `fold<K>.train` / `fold<K>.test`
/// id lists, one id per line, K counted from 1.
pub fn load_folds(dir: &Path) -> Result<Vec<FoldSplit>, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::MissingDirectory(dir.display().to_string()));
    }
    let read_ids = |path: &Path| -> Result<Vec<String>, CorpusError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CorpusError::Io(path.display().to_string(), e.to_string()))?;
        Ok(text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect())
    };
    let mut folds = Vec::new();
    for k in 1.. {
        let train = dir.join(format!("fold{k}.train"));
        let test = dir.join(format!("fold{k}.test"));
        if !train.exists() || !test.exists() {
            break;
        }
        folds.push(FoldSplit {
            fold_index: k,
            train_ids: read_ids(&train)?,
            test_ids: read_ids(&test)?,
        });
    }
    if folds.is_empty() {
        return Err(CorpusError::Parse(format!(
            "no fold files (fold1.train / fold1.test ...) found in {}",
            dir.display()
        )));
    }
    Ok(folds)
}

pub fn write_folds(folds: &[FoldSplit], dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::Io(dir.display().to_string(), e.to_string()))?;
    for fold in folds {
        let train = dir.join(format!("fold{}.train", fold.fold_index));
        let test = dir.join(format!("fold{}.test", fold.fold_index));
        fs::write(&train, fold.train_ids.join("\n") + "\n")
            .map_err(|e| CorpusError::Io(train.display().to_string(), e.to_string()))?;
        fs::write(&test, fold.test_ids.join("\n") + "\n")
            .map_err(|e| CorpusError::Io(test.display().to_string(), e.to_string()))?;
    }
    Ok(())
}

/// Split a training set into (train, validation) subsets; the validation
/// side holds `round(fraction * n)` records, chosen by seeded shuffle.
pub fn split_validation<'a>(
    records: &[&'a SentenceRecord],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<&'a SentenceRecord>, Vec<&'a SentenceRecord>), CorpusError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CorpusError::Parse(format!(
            "validation fraction must lie in (0,1), got {fraction}"
        )));
    }
    let n = records.len();
    let val_size = (fraction * n as f64).round() as usize;
    if val_size == 0 || val_size >= n {
        return Err(CorpusError::Parse(format!(
            "validation split of {n} records at fraction {fraction} would leave an empty side"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let val_idx: std::collections::BTreeSet<usize> = order[..val_size].iter().cloned().collect();
    let mut train = Vec::with_capacity(n - val_size);
    let mut val = Vec::with_capacity(val_size);
    for (i, r) in records.iter().enumerate() {
        if val_idx.contains(&i) {
            val.push(*r);
        } else {
            train.push(*r);
        }
    }
    Ok((train, val))
}
