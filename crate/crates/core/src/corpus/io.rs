//! Record files: one UTF-8 text file per sentence, `key: value` lines with
//! arrays in document order. Extension `.rec`.

use std::fs;
use std::path::Path;

use crate::corpus::bio::BioTag;
use crate::corpus::record::SentenceRecord;
use crate::corpus::CorpusError;

const HEADER: &str = "relcl-record v1";

pub fn record_to_string(record: &SentenceRecord) -> String {
    let mut out = String::new();
    out.push_str(HEADER);
    out.push('\n');
    out.push_str(&format!("id: {}\n", record.id));
    out.push_str(&format!("tokens: {}\n", record.tokens.join(" ")));
    let tags: Vec<String> = record.tags.iter().map(|t| t.to_string()).collect();
    out.push_str(&format!("tags: {}\n", tags.join(" ")));
    let rels: Vec<String> = record
        .relations
        .iter()
        .map(|(d, a)| format!("{d},{a}"))
        .collect();
    out.push_str(&format!("relations: {}\n", rels.join(" ")));
    let enc: Vec<String> = record.encoded.iter().map(|v| v.to_string()).collect();
    out.push_str(&format!("encoded: {}\n", enc.join(" ")));
    let mask: Vec<String> = record.attention_mask.iter().map(|v| v.to_string()).collect();
    out.push_str(&format!("attention_mask: {}\n", mask.join(" ")));
    out
}

pub fn record_from_string(text: &str, source: &str) -> Result<SentenceRecord, CorpusError> {
    let bad = |msg: String| CorpusError::ParseFile { file: source.to_string(), reason: msg };
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(bad("missing or unsupported header".into()));
    }
    let mut id = None;
    let mut tokens = None;
    let mut tags = None;
    let mut relations = None;
    let mut encoded = None;
    let mut mask = None;
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once(": ")
            .or_else(|| line.split_once(':'))
            .ok_or_else(|| bad(format!("malformed line `{line}`")))?;
        let value = value.trim_start();
        match key {
            "id" => id = Some(value.to_string()),
            "tokens" => {
                tokens = Some(value.split_whitespace().map(|s| s.to_string()).collect::<Vec<_>>())
            }
            "tags" => {
                let parsed: Result<Vec<BioTag>, _> =
                    value.split_whitespace().map(BioTag::parse).collect();
                tags = Some(parsed.map_err(|e| bad(e.to_string()))?);
            }
            "relations" => {
                let mut pairs = Vec::new();
                for tok in value.split_whitespace() {
                    let (d, a) = tok
                        .split_once(',')
                        .ok_or_else(|| bad(format!("malformed relation `{tok}`")))?;
                    let d: usize = d.parse().map_err(|_| bad(format!("malformed relation `{tok}`")))?;
                    let a: usize = a.parse().map_err(|_| bad(format!("malformed relation `{tok}`")))?;
                    pairs.push((d, a));
                }
                relations = Some(pairs);
            }
            "encoded" => {
                let parsed: Result<Vec<u32>, _> =
                    value.split_whitespace().map(|t| t.parse()).collect();
                encoded = Some(parsed.map_err(|_| bad("malformed encoded ids".into()))?);
            }
            "attention_mask" => {
                let parsed: Result<Vec<u8>, _> =
                    value.split_whitespace().map(|t| t.parse()).collect();
                mask = Some(parsed.map_err(|_| bad("malformed attention mask".into()))?);
            }
            other => return Err(bad(format!("unknown key `{other}`"))),
        }
    }
    Ok(SentenceRecord {
        id: id.ok_or_else(|| bad("missing id".into()))?,
        tokens: tokens.ok_or_else(|| bad("missing tokens".into()))?,
        tags: tags.ok_or_else(|| bad("missing tags".into()))?,
        relations: relations.ok_or_else(|| bad("missing relations".into()))?,
        encoded: encoded.ok_or_else(|| bad("missing encoded".into()))?,
        attention_mask: mask.ok_or_else(|| bad("missing attention_mask".into()))?,
    })
}

/// Load and validate every `.rec` file in a directory, sorted by record id.
pub fn load_corpus(dir: &Path) -> Result<Vec<SentenceRecord>, CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::MissingDirectory(dir.display().to_string()));
    }
    let mut paths = Vec::new();
    let entries = fs::read_dir(dir)
        .map_err(|e| CorpusError::Io(dir.display().to_string(), e.to_string()))?;
    for entry in entries {
        let entry = entry.map_err(|e| CorpusError::Io(dir.display().to_string(), e.to_string()))?;
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) == Some("rec") {
            paths.push(path);
        }
    }
    let mut records = Vec::with_capacity(paths.len());
    for path in &paths {
        let text = fs::read_to_string(path)
            .map_err(|e| CorpusError::Io(path.display().to_string(), e.to_string()))?;
        let record = record_from_string(&text, &path.display().to_string())?;
        record.validate()?;
        records.push(record);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in records.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(CorpusError::Parse(format!("duplicate record id `{}`", pair[0].id)));
        }
    }
    Ok(records)
}

/// Write records as one `.rec` file per sentence.
pub fn write_corpus(records: &[SentenceRecord], dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(dir).map_err(|e| CorpusError::Io(dir.display().to_string(), e.to_string()))?;
    for record in records {
        let path = dir.join(format!("{}.rec", record.id));
        fs::write(&path, record_to_string(record))
            .map_err(|e| CorpusError::Io(path.display().to_string(), e.to_string()))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bio::{BioTag as T, EntityType};

    fn sample() -> SentenceRecord {
        SentenceRecord {
            id: "s0001".into(),
            tokens: vec!["gabapentin".into(), "renal".into(), "impairment".into()],
            tags: vec![
                T::Begin(EntityType::Drug),
                T::Begin(EntityType::Ae),
                T::Inside(EntityType::Ae),
            ],
            relations: vec![(0, 2)],
            encoded: vec![5, 6, 7, 0],
            attention_mask: vec![1, 1, 1, 0],
        }
    }

    #[test]
    fn write_then_load_reproduces_records() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![sample()];
        write_corpus(&records, dir.path()).unwrap();
        let loaded = load_corpus(dir.path()).unwrap();
        assert_eq!(loaded, records);
    }

    #[test]
    fn empty_directory_gives_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_corpus(dir.path()).unwrap().is_empty());
    }

    #[test]
    fn malformed_file_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("bad.rec"), "not a record\n").unwrap();
        match load_corpus(dir.path()) {
            Err(CorpusError::ParseFile { file, .. }) => assert!(file.contains("bad.rec")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn invalid_bio_in_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = sample();
        r.tags = vec![T::Outside, T::Inside(EntityType::Ae), T::Inside(EntityType::Ae)];
        r.relations.clear();
        std::fs::write(dir.path().join("s.rec"), record_to_string(&r)).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(CorpusError::BioViolation { index: 1, .. })));
    }
}
