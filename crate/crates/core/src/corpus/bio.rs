use std::fmt;

use crate::corpus::CorpusError;

/// The two entity kinds of the corpus: drugs and the adverse effects they
/// cause.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityType {
    Drug,
    Ae,
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityType::Drug => write!(f, "DRUG"),
            EntityType::Ae => write!(f, "AE"),
        }
    }
}

impl EntityType {
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        match s {
            "DRUG" => Ok(EntityType::Drug),
            "AE" => Ok(EntityType::Ae),
            other => Err(CorpusError::Parse(format!("unknown entity type `{other}`"))),
        }
    }
}

/// Token-level BIO tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BioTag {
    Outside,
    Begin(EntityType),
    Inside(EntityType),
}

pub const ALL_TAGS: [BioTag; 5] = [
    BioTag::Outside,
    BioTag::Begin(EntityType::Drug),
    BioTag::Inside(EntityType::Drug),
    BioTag::Begin(EntityType::Ae),
    BioTag::Inside(EntityType::Ae),
];

impl fmt::Display for BioTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BioTag::Outside => write!(f, "O"),
            BioTag::Begin(t) => write!(f, "B-{t}"),
            BioTag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl BioTag {
    pub fn parse(s: &str) -> Result<Self, CorpusError> {
        match s {
            "O" => Ok(BioTag::Outside),
            _ => {
                let (kind, ty) = s
                    .split_once('-')
                    .ok_or_else(|| CorpusError::Parse(format!("unknown BIO tag `{s}`")))?;
                let ty = EntityType::parse(ty)?;
                match kind {
                    "B" => Ok(BioTag::Begin(ty)),
                    "I" => Ok(BioTag::Inside(ty)),
                    _ => Err(CorpusError::Parse(format!("unknown BIO tag `{s}`"))),
                }
            }
        }
    }

    pub fn entity_type(&self) -> Option<EntityType> {
        match self {
            BioTag::Outside => None,
            BioTag::Begin(t) | BioTag::Inside(t) => Some(*t),
        }
    }
}

/// A typed token span, end inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
    pub entity_type: EntityType,
}

impl Span {
    pub fn new(start: usize, end: usize, entity_type: EntityType) -> Self {
        Span { start, end, entity_type }
    }

    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index <= self.end
    }
}

/// Check a whole tag sequence: an I-X may only continue a B-X or I-X.
/// Returns the index of the first violation.
pub fn validate_bio(tags: &[BioTag]) -> Result<(), usize> {
    let mut prev: Option<EntityType> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::Inside(t) if prev != Some(*t) => return Err(i),
            _ => {}
        }
        prev = tag.entity_type();
    }
    Ok(())
}

/// Encode non-overlapping typed spans as a BIO sequence over `len` tokens.
pub fn encode_bio(spans: &[Span], len: usize) -> Result<Vec<BioTag>, CorpusError> {
    let mut sorted: Vec<&Span> = spans.iter().collect();
    sorted.sort_by_key(|s| (s.start, s.end));
    for w in sorted.windows(2) {
        if w[1].start <= w[0].end {
            return Err(CorpusError::OverlappingSpans {
                first: (w[0].start, w[0].end),
                second: (w[1].start, w[1].end),
            });
        }
    }
    let mut tags = vec![BioTag::Outside; len];
    for span in &sorted {
        if span.end < span.start || span.end >= len {
            return Err(CorpusError::SpanOutOfBounds {
                start: span.start,
                end: span.end,
                len,
            });
        }
        tags[span.start] = BioTag::Begin(span.entity_type);
        for t in tags.iter_mut().take(span.end + 1).skip(span.start + 1) {
            *t = BioTag::Inside(span.entity_type);
        }
    }
    Ok(tags)
}

/// Recover spans from a valid BIO sequence. The inverse of [`encode_bio`].
pub fn decode_bio_strict(tags: &[BioTag]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        match tag {
            BioTag::Begin(t) => {
                if let Some(s) = open.take() {
                    spans.push(s);
                }
                open = Some(Span::new(i, i, *t));
            }
            BioTag::Inside(_) => {
                if let Some(s) = open.as_mut() {
                    s.end = i;
                }
            }
            BioTag::Outside => {
                if let Some(s) = open.take() {
                    spans.push(s);
                }
            }
        }
    }
    if let Some(s) = open.take() {
        spans.push(s);
    }
    spans
}

/// The last token index of each entity span is the token that stands for the
/// whole entity in relation pairs.
pub fn relation_heads(drug: Span, ae: Span) -> (usize, usize) {
    (drug.end, ae.end)
}
