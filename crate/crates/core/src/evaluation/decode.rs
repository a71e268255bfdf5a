//! BIO decoding of possibly invalid predicted tag sequences.

use crate::corpus::bio::{decode_bio_strict, BioTag, Span};

/// Decode predicted tags into spans, repairing an I-X that follows O,
/// start-of-sentence or a different entity type into a B-X.
pub fn decode_bio_with_repair(tags: &[BioTag]) -> Vec<Span> {
    let mut repaired = Vec::with_capacity(tags.len());
    let mut prev: Option<crate::corpus::bio::EntityType> = None;
    for tag in tags {
        let fixed = match tag {
            BioTag::Inside(t) if prev != Some(*t) => BioTag::Begin(*t),
            other => *other,
        };
        prev = fixed.entity_type();
        repaired.push(fixed);
    }
    decode_bio_strict(&repaired)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::bio::EntityType;
    use crate::corpus::bio::BioTag as T;

    #[test]
    fn valid_sequence_decodes_unchanged() {
        let tags = vec![
            T::Begin(EntityType::Ae),
            T::Inside(EntityType::Ae),
            T::Outside,
            T::Begin(EntityType::Drug),
        ];
        let spans = decode_bio_with_repair(&tags);
        assert_eq!(
            spans,
            vec![Span::new(0, 1, EntityType::Ae), Span::new(3, 3, EntityType::Drug)]
        );
    }

    #[test]
    fn inside_after_outside_becomes_begin() {
        let tags = vec![T::Outside, T::Inside(EntityType::Ae), T::Inside(EntityType::Ae)];
        assert_eq!(decode_bio_with_repair(&tags), vec![Span::new(1, 2, EntityType::Ae)]);
    }

    #[test]
    fn inside_at_sentence_start_becomes_begin() {
        let tags = vec![T::Inside(EntityType::Drug)];
        assert_eq!(decode_bio_with_repair(&tags), vec![Span::new(0, 0, EntityType::Drug)]);
    }

    #[test]
    fn type_switch_opens_a_new_span() {
        let tags = vec![T::Begin(EntityType::Drug), T::Inside(EntityType::Ae)];
        assert_eq!(
            decode_bio_with_repair(&tags),
            vec![Span::new(0, 0, EntityType::Drug), Span::new(1, 1, EntityType::Ae)]
        );
    }
}
