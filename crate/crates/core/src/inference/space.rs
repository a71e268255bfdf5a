//! Labeled representation spaces and their file format.

use std::fmt;
use std::fs;
use std::path::Path;

use crate::corpus::bio::BioTag;
use crate::inference::InferenceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Relation,
    Entity,
}

impl SpaceKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SpaceKind::Relation => "relation",
            SpaceKind::Entity => "entity",
        }
    }

    pub fn parse(s: &str) -> Result<Self, InferenceError> {
        match s {
            "relation" => Ok(SpaceKind::Relation),
            "entity" => Ok(SpaceKind::Entity),
            other => Err(InferenceError::Space(format!("unknown space kind `{other}`"))),
        }
    }
}

/// Label attached to a stored or predicted vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SpaceLabel {
    Relation,
    NoRelation,
    Tag(BioTag),
}

impl fmt::Display for SpaceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpaceLabel::Relation => write!(f, "relation"),
            SpaceLabel::NoRelation => write!(f, "no-relation"),
            SpaceLabel::Tag(tag) => write!(f, "{tag}"),
        }
    }
}

impl SpaceLabel {
    pub fn parse(s: &str) -> Result<Self, InferenceError> {
        match s {
            "relation" => Ok(SpaceLabel::Relation),
            "no-relation" => Ok(SpaceLabel::NoRelation),
            other => BioTag::parse(other)
                .map(SpaceLabel::Tag)
                .map_err(|_| InferenceError::Space(format!("unknown label `{other}`"))),
        }
    }
}

/// An immutable set of labeled representation vectors plus the fingerprint
/// of the model/source combination that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedSpace {
    pub kind: SpaceKind,
    pub dimension: usize,
    pub vectors: Vec<(SpaceLabel, Vec<f64>)>,
    pub produced_by: String,
}

impl TrainedSpace {
    pub fn new(
        kind: SpaceKind,
        dimension: usize,
        produced_by: String,
    ) -> Self {
        TrainedSpace { kind, dimension, vectors: Vec::new(), produced_by }
    }

    pub fn push(&mut self, label: SpaceLabel, vector: Vec<f64>) -> Result<(), InferenceError> {
        if vector.len() != self.dimension {
            return Err(InferenceError::Space(format!(
                "vector of length {} in a {}-dimensional space",
                vector.len(),
                self.dimension
            )));
        }
        self.vectors.push((label, vector));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

const HEADER: &str = "relcl-space v1";

pub fn write_space(space: &TrainedSpace, path: &Path) -> Result<(), InferenceError> {
    let mut out = String::from(HEADER);
    out.push('\n');
    out.push_str(&format!("kind: {}\n", space.kind.as_str()));
    out.push_str(&format!("dim: {}\n", space.dimension));
    out.push_str(&format!("count: {}\n", space.len()));
    out.push_str(&format!("produced_by: {}\n", space.produced_by));
    for (label, vector) in &space.vectors {
        let values: Vec<String> = vector.iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!("{label} {}\n", values.join(" ")));
    }
    fs::write(path, out).map_err(|e| InferenceError::Io(path.display().to_string(), e.to_string()))
}

pub fn load_space(path: &Path) -> Result<TrainedSpace, InferenceError> {
    let text = fs::read_to_string(path)
        .map_err(|e| InferenceError::Io(path.display().to_string(), e.to_string()))?;
    let bad = |msg: &str| InferenceError::Space(format!("{}: {}", path.display(), msg));
    let mut lines = text.lines();
    if lines.next() != Some(HEADER) {
        return Err(bad("missing or unsupported header"));
    }
    let kind = SpaceKind::parse(
        lines.next().and_then(|l| l.strip_prefix("kind: ")).ok_or_else(|| bad("missing kind"))?,
    )?;
    let dimension: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("dim: "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing dim"))?;
    let count: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("count: "))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| bad("missing count"))?;
    let produced_by = lines
        .next()
        .and_then(|l| l.strip_prefix("produced_by: "))
        .ok_or_else(|| bad("missing produced_by"))?
        .to_string();
    let mut space = TrainedSpace::new(kind, dimension, produced_by);
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let (label, rest) = line
            .split_once(' ')
            .ok_or_else(|| bad(&format!("malformed vector line `{line}`")))?;
        let label = SpaceLabel::parse(label)?;
        let vector: Vec<f64> = rest
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad("malformed vector value"))?;
        space.push(label, vector)?;
    }
    if space.len() != count {
        return Err(bad(&format!("expected {count} vectors, found {}", space.len())));
    }
    Ok(space)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bio::EntityType;

    #[test]
    fn space_file_round_trip_is_exact() {
        let mut space = TrainedSpace::new(SpaceKind::Entity, 3, "fp123".into());
        space.push(SpaceLabel::Tag(BioTag::Outside), vec![0.1, -2.0 / 3.0, 1e-200]).unwrap();
        space
            .push(SpaceLabel::Tag(BioTag::Begin(EntityType::Drug)), vec![1.5, 2.5, -3.5])
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("space.txt");
        write_space(&space, &path).unwrap();
        let loaded = load_space(&path).unwrap();
        assert_eq!(loaded, space);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let mut space = TrainedSpace::new(SpaceKind::Relation, 4, String::new());
        assert!(space.push(SpaceLabel::Relation, vec![1.0, 2.0]).is_err());
    }
}
