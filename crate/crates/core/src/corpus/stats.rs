use std::collections::BTreeSet;

use crate::corpus::bio::EntityType;
use crate::corpus::record::SentenceRecord;

/// Aggregate counts over a record set. Unique drug/AE counts are
/// case-insensitive on the surface string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub sentence_count: usize,
    pub relation_count: usize,
    pub entity_count: usize,
    pub unique_drug_count: usize,
    pub unique_ae_count: usize,
}

pub fn corpus_stats<'a>(records: impl IntoIterator<Item = &'a SentenceRecord>) -> CorpusStats {
    let mut stats = CorpusStats::default();
    let mut drugs: BTreeSet<String> = BTreeSet::new();
    let mut aes: BTreeSet<String> = BTreeSet::new();
    for record in records {
        stats.sentence_count += 1;
        stats.relation_count += record.relations.len();
        for span in record.spans() {
            stats.entity_count += 1;
            let surface = record.surface(&span).to_lowercase();
            match span.entity_type {
                EntityType::Drug => drugs.insert(surface),
                EntityType::Ae => aes.insert(surface),
            };
        }
    }
    stats.unique_drug_count = drugs.len();
    stats.unique_ae_count = aes.len();
    stats
}
