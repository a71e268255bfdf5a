use crate::corpus::bio::{decode_bio_strict, validate_bio, BioTag, EntityType, Span};
use crate::corpus::CorpusError;

/// One annotated sentence: tokens, BIO tags, relation head pairs and the
/// padded encoding the text encoder consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceRecord {
    pub id: String,
    pub tokens: Vec<String>,
    pub tags: Vec<BioTag>,
    /// (drug head index, AE head index) pairs; each index is the last token
    /// of its entity span.
    pub relations: Vec<(usize, usize)>,
    pub encoded: Vec<u32>,
    pub attention_mask: Vec<u8>,
}

impl SentenceRecord {
    /// Validate every structural invariant. Call after construction or load.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let id = self.id.clone();
        if self.tags.len() != self.tokens.len() {
            return Err(CorpusError::Invalid {
                id,
                reason: format!("{} tags for {} tokens", self.tags.len(), self.tokens.len()),
            });
        }
        if let Err(idx) = validate_bio(&self.tags) {
            return Err(CorpusError::BioViolation { id, index: idx });
        }
        if self.encoded.len() != self.attention_mask.len() {
            return Err(CorpusError::Invalid {
                id,
                reason: format!(
                    "encoded length {} differs from mask length {}",
                    self.encoded.len(),
                    self.attention_mask.len()
                ),
            });
        }
        if self.encoded.len() < self.tokens.len() {
            return Err(CorpusError::Invalid {
                id,
                reason: "encoded sentence shorter than token list".into(),
            });
        }
        // The mask must be 1 on exactly the real-token prefix.
        for (i, &m) in self.attention_mask.iter().enumerate() {
            let expected = if i < self.tokens.len() { 1 } else { 0 };
            if m != expected {
                return Err(CorpusError::Invalid {
                    id,
                    reason: format!("attention mask bit {i} is {m}, expected {expected}"),
                });
            }
        }
        let spans = self.spans();
        let mut seen = std::collections::BTreeSet::new();
        for &(drug_head, ae_head) in &self.relations {
            if drug_head >= self.tokens.len() || ae_head >= self.tokens.len() {
                return Err(CorpusError::Invalid {
                    id,
                    reason: format!("relation ({drug_head},{ae_head}) out of token range"),
                });
            }
            if !seen.insert((drug_head, ae_head)) {
                return Err(CorpusError::Invalid {
                    id,
                    reason: format!("duplicate relation ({drug_head},{ae_head})"),
                });
            }
            let is_head_of = |idx: usize, ty: EntityType| {
                spans.iter().any(|s| s.entity_type == ty && s.end == idx)
            };
            if !is_head_of(drug_head, EntityType::Drug) {
                return Err(CorpusError::Invalid {
                    id,
                    reason: format!("index {drug_head} is not the last token of a drug span"),
                });
            }
            if !is_head_of(ae_head, EntityType::Ae) {
                return Err(CorpusError::Invalid {
                    id: self.id.clone(),
                    reason: format!("index {ae_head} is not the last token of an AE span"),
                });
            }
        }
        Ok(())
    }

    /// Entity spans recovered from the tags.
    pub fn spans(&self) -> Vec<Span> {
        decode_bio_strict(&self.tags)
    }

    pub fn has_relations(&self) -> bool {
        !self.relations.is_empty()
    }

    /// Indices of tokens lying inside any span of the given type.
    pub fn tokens_in_type(&self, ty: EntityType) -> Vec<usize> {
        let mut out = Vec::new();
        for span in self.spans().iter().filter(|s| s.entity_type == ty) {
            out.extend(span.start..=span.end);
        }
        out
    }

    /// Surface string of a span, tokens joined by a single space.
    pub fn surface(&self, span: &Span) -> String {
        self.tokens[span.start..=span.end].join(" ")
    }
}
