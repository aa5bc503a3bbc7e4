//! Candidate generation from the alias prior table, training-time
//! subsampling, and candidate recall.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::kb::KbStore;

pub const DEFAULT_CAP: usize = 30;
/// Top-by-prior non-gold entries kept by [`training_subsample`].
pub const SUBSAMPLE_TOP: usize = 2;
/// Uniformly sampled non-gold entries kept by [`training_subsample`].
pub const SUBSAMPLE_RANDOM: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub entity_id: String,
    pub prior: f64,
}

/// Which slot of a [`CandidateSet`] is correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GoldSlot {
    Entity(usize),
    /// The implicit slot after the real entries.
    Nil,
}

/// Ranked candidates for one mention. The NIL slot is implicit and always
/// sits after `entries`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub surface: String,
    pub entries: Vec<Candidate>,
    pub gold: Option<GoldSlot>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Index of the NIL slot.
    pub fn nil_index(&self) -> usize {
        self.entries.len()
    }

    pub fn position(&self, entity_id: &str) -> Option<usize> {
        self.entries.iter().position(|c| c.entity_id == entity_id)
    }

    /// Slot the given gold entity occupies (NIL when absent or unknown).
    pub fn with_gold(mut self, gold_id: Option<&str>) -> Self {
        self.gold = Some(match gold_id.and_then(|g| self.position(g)) {
            Some(i) => GoldSlot::Entity(i),
            None => GoldSlot::Nil,
        });
        self
    }

    /// Gold slot as a class index over `entries` followed by NIL.
    pub fn gold_class(&self) -> Option<usize> {
        self.gold.map(|g| match g {
            GoldSlot::Entity(i) => i,
            GoldSlot::Nil => self.nil_index(),
        })
    }
}

/// Top `cap` entities for a surface by prior (ties by id); empty when unknown.
pub fn generate(store: &KbStore, surface: &str, cap: usize) -> CandidateSet {
    let entries = store
        .lookup(surface)
        .iter()
        .take(cap.max(1))
        .map(|e| Candidate {
            entity_id: e.entity_id.clone(),
            prior: e.prior,
        })
        .collect();
    CandidateSet {
        surface: crate::text::normalize_surface(surface),
        entries,
        gold: None,
    }
}

/// Keeps the gold entity (if present), the two highest-prior others and up to
/// two uniformly sampled others, preserving prior order. The gold slot points
/// at NIL when the gold entity is not among `full`.
pub fn training_subsample(full: &CandidateSet, gold_id: Option<&str>, seed: u64) -> CandidateSet {
    let gold_pos = gold_id.and_then(|g| full.position(g));
    let others: Vec<usize> = (0..full.len()).filter(|&i| Some(i) != gold_pos).collect();
    let mut keep: Vec<usize> = gold_pos.into_iter().collect();
    keep.extend(others.iter().take(SUBSAMPLE_TOP));
    let rest: Vec<usize> = others.iter().skip(SUBSAMPLE_TOP).copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    keep.extend(rest.choose_multiple(&mut rng, SUBSAMPLE_RANDOM));
    keep.sort_unstable();
    let entries = keep.iter().map(|&i| full.entries[i].clone()).collect();
    CandidateSet {
        surface: full.surface.clone(),
        entries,
        gold: None,
    }
    .with_gold(gold_id)
}

/// Fraction of gold-labelled mentions whose entity appears among the top
/// `cap` candidates. Mentions whose gold entity is missing from the KB count
/// as misses; mentions without a gold id are ignored. Zero mentions gives 0.
pub fn candidate_recall(corpus: &[Document], store: &KbStore, cap: usize) -> f64 {
    let (mut hit, mut total) = (0usize, 0usize);
    for doc in corpus {
        for m in &doc.mentions {
            let Some(gold) = m.entity_id.as_deref() else { continue };
            total += 1;
            let cands = generate(store, &doc.surface(m.start, m.end), cap);
            if cands.position(gold).is_some() {
                hit += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        hit as f64 / total as f64
    }
}
