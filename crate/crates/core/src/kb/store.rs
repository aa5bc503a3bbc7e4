use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{expand_types, TypeId, TypeVocabulary};
use crate::corpus::read_jsonl;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::text::normalize_surface;

/// One knowledge-base record, in the shape of the entity JSONL lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub types: BTreeSet<TypeId>,
    #[serde(default)]
    pub aliases: Vec<String>,
    #[serde(default)]
    pub prior_counts: BTreeMap<String, u64>,
}

impl Entity {
    /// Every normalised surface this entity can be looked up by, with its count.
    /// Labels and aliases without a recorded count contribute 0.
    fn surface_counts(&self) -> BTreeMap<String, u64> {
        let mut out: BTreeMap<String, u64> = BTreeMap::new();
        for s in std::iter::once(&self.label).chain(&self.aliases) {
            let key = normalize_surface(s);
            if !key.is_empty() {
                out.entry(key).or_insert(0);
            }
        }
        for (s, &c) in &self.prior_counts {
            let key = normalize_surface(s);
            if !key.is_empty() {
                *out.entry(key).or_insert(0) += c;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AliasEntry {
    pub entity_id: String,
    pub count: u64,
    pub prior: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestStats {
    /// Types dropped because their relation is not whitelisted.
    pub dropped_types: usize,
    /// Whitelisted types (after expansion) that are not part of the vocabulary.
    pub out_of_vocab_types: usize,
}

/// Frozen knowledge base: entities, the surface → entity prior table and the
/// type vocabulary. Updates go through [`KbStore::add_entity`], which returns
/// a new store.
#[derive(Debug, Clone, PartialEq)]
pub struct KbStore {
    pub(crate) entities: BTreeMap<String, Entity>,
    pub(crate) alias_index: BTreeMap<String, Vec<AliasEntry>>,
    pub(crate) type_vocab: TypeVocabulary,
    pub(crate) stats: IngestStats,
}

impl KbStore {
    pub fn new(type_vocab: TypeVocabulary) -> Self {
        Self {
            entities: BTreeMap::new(),
            alias_index: BTreeMap::new(),
            type_vocab,
            stats: IngestStats::default(),
        }
    }

    /// Reads an entity JSONL file into a store keyed by `type_vocab`.
    pub fn ingest(path: &Path, type_vocab: TypeVocabulary) -> Result<Self> {
        let entities: Vec<Entity> = read_jsonl(path)?;
        Self::from_entities(entities, type_vocab)
    }

    pub fn from_entities(entities: Vec<Entity>, type_vocab: TypeVocabulary) -> Result<Self> {
        let mut store = Self::new(type_vocab);
        for e in entities {
            store.insert(e)?;
        }
        store.rebuild_index();
        Ok(store)
    }

    /// Normalises an entity's types: whitelist filter, hierarchy expansion,
    /// then restriction to the vocabulary.
    fn normalize_types(&mut self, e: &mut Entity) {
        let before = e.types.len();
        let allowed: BTreeSet<TypeId> = e
            .types
            .iter()
            .filter(|t| self.type_vocab.allows_relation(&t.relation))
            .cloned()
            .collect();
        self.stats.dropped_types += before - allowed.len();
        let expanded = expand_types(&allowed, self.type_vocab.hierarchy());
        let expanded: BTreeSet<TypeId> = expanded
            .into_iter()
            .filter(|t| self.type_vocab.allows_relation(&t.relation))
            .collect();
        let kept: BTreeSet<TypeId> = expanded
            .iter()
            .filter(|t| self.type_vocab.contains(t))
            .cloned()
            .collect();
        self.stats.out_of_vocab_types += expanded.len() - kept.len();
        e.types = kept;
    }

    fn insert(&mut self, mut e: Entity) -> Result<()> {
        if self.entities.contains_key(&e.id) {
            return Err(Error::DuplicateEntity(e.id));
        }
        self.normalize_types(&mut e);
        self.entities.insert(e.id.clone(), e);
        Ok(())
    }

    fn rebuild_index(&mut self) {
        let mut index: BTreeMap<String, Vec<AliasEntry>> = BTreeMap::new();
        for e in self.entities.values() {
            for (surface, count) in e.surface_counts() {
                index.entry(surface).or_default().push(AliasEntry {
                    entity_id: e.id.clone(),
                    count,
                    prior: 0.0,
                });
            }
        }
        for entries in index.values_mut() {
            normalize_entries(entries);
        }
        self.alias_index = index;
    }

    /// Returns a copy of the store with `entity` added and the priors of its
    /// surfaces renormalised. Nothing else changes.
    pub fn add_entity(&self, entity: Entity) -> Result<KbStore> {
        let mut next = self.clone();
        next.insert(entity.clone())?;
        let stored = &next.entities[&entity.id];
        for (surface, count) in stored.surface_counts() {
            let entries = next.alias_index.entry(surface).or_default();
            entries.push(AliasEntry {
                entity_id: stored.id.clone(),
                count,
                prior: 0.0,
            });
            normalize_entries(entries);
        }
        Ok(next)
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entities.contains_key(id)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn type_vocab(&self) -> &TypeVocabulary {
        &self.type_vocab
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    /// Entries for a surface (normalised here), sorted by prior descending then id.
    pub fn lookup(&self, surface: &str) -> &[AliasEntry] {
        self.alias_index
            .get(&normalize_surface(surface))
            .map_or(&[], Vec::as_slice)
    }

    pub fn surfaces(&self) -> impl Iterator<Item = (&String, &Vec<AliasEntry>)> {
        self.alias_index.iter()
    }

    /// The entity's `[1, |T|]` binary type vector.
    pub fn type_vector(&self, entity: &Entity) -> Tensor {
        super::types::type_vector(&entity.types, &self.type_vocab)
    }
}

fn normalize_entries(entries: &mut [AliasEntry]) {
    let total: u64 = entries.iter().map(|e| e.count).sum();
    let n = entries.len() as f64;
    for e in entries.iter_mut() {
        e.prior = if total > 0 {
            e.count as f64 / total as f64
        } else {
            1.0 / n
        };
    }
    entries.sort_by(|a, b| {
        b.prior
            .total_cmp(&a.prior)
            .then_with(|| a.entity_id.cmp(&b.entity_id))
    });
}
