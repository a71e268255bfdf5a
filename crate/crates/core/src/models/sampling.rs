//! Balanced entity sampling for the token-level contrastive objective: the
//! batch's tag census is taken first, then anchors are drawn evenly per tag
//! and each anchor gets its positive/negative candidates from the pool.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::bio::{BioTag, ALL_TAGS};
use crate::corpus::record::SentenceRecord;

/// A token inside a batch: (record position in the batch, token position).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenRef {
    pub record_index: usize,
    pub token_index: usize,
}

#[derive(Debug, Clone)]
pub struct AnchorSample {
    pub anchor: TokenRef,
    pub tag: BioTag,
    /// Indices into `candidates` that carry the anchor's tag.
    pub positive_indices: Vec<usize>,
    pub candidates: Vec<TokenRef>,
}

#[derive(Debug, Clone)]
pub struct BalancedEntitySample {
    pub anchors: Vec<AnchorSample>,
    /// Tag classes that had no token in the batch and were skipped.
    pub skipped_classes: Vec<BioTag>,
}

#[derive(Debug, Clone, Copy)]
pub struct EntitySampleConfig {
    /// Anchors drawn per tag class (fewer when the batch has fewer tokens).
    pub per_class_quota: usize,
    /// Positives per anchor (same tag, excluding the anchor itself).
    pub positives_per_anchor: usize,
    /// Total candidates per anchor, positives included.
    pub candidates_per_anchor: usize,
}

impl Default for EntitySampleConfig {
    fn default() -> Self {
        EntitySampleConfig {
            per_class_quota: 8,
            positives_per_anchor: 2,
            candidates_per_anchor: 8,
        }
    }
}

pub fn sample_balanced_entities(
    batch: &[&SentenceRecord],
    config: &EntitySampleConfig,
    seed: u64,
) -> BalancedEntitySample {
    // a-priori census of the batch's tags
    let mut pools: Vec<(BioTag, Vec<TokenRef>)> =
        ALL_TAGS.iter().map(|t| (*t, Vec::new())).collect();
    for (ri, record) in batch.iter().enumerate() {
        for (ti, tag) in record.tags.iter().enumerate() {
            let slot = pools.iter_mut().find(|(t, _)| t == tag).expect("known tag");
            slot.1.push(TokenRef { record_index: ri, token_index: ti });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut anchors = Vec::new();
    let mut skipped = Vec::new();
    for (tag, pool) in &pools {
        // a lone token has no same-tag positive, so its class is skipped
        // like an absent one
        if pool.len() < 2 {
            skipped.push(*tag);
            continue;
        }
        let mut shuffled = pool.clone();
        shuffled.shuffle(&mut rng);
        let take = config.per_class_quota.min(shuffled.len());
        for &anchor in &shuffled[..take] {
            let mut positives: Vec<TokenRef> =
                pool.iter().cloned().filter(|t| *t != anchor).collect();
            positives.shuffle(&mut rng);
            positives.truncate(config.positives_per_anchor);

            let mut negatives: Vec<TokenRef> = pools
                .iter()
                .filter(|(t, _)| t != tag)
                .flat_map(|(_, p)| p.iter().cloned())
                .collect();
            negatives.shuffle(&mut rng);
            let negative_quota =
                config.candidates_per_anchor.saturating_sub(positives.len());
            negatives.truncate(negative_quota);

            let positive_indices: Vec<usize> = (0..positives.len()).collect();
            let mut candidates = positives;
            candidates.extend(negatives);
            anchors.push(AnchorSample { anchor, tag: *tag, positive_indices, candidates });
        }
    }
    BalancedEntitySample { anchors, skipped_classes: skipped }
}
