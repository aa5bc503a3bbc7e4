//! On-disk form of a frozen [`KbStore`].
//!
//! Layout: 8-byte magic, little-endian `u64` manifest length, a JSON manifest
//! (format version, type vocabulary, entities, ingest stats, index size), then
//! the alias index sorted by surface. Each index record is a length-prefixed
//! surface string, a `u32` entry count, and per entry a length-prefixed entity
//! id, a `u64` raw count and an `f64` prior. All integers are little-endian and
//! string lengths are `u32` byte counts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::store::{AliasEntry, Entity, IngestStats, KbStore};
use super::types::TypeVocabulary;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TLKBASE\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    type_vocab: TypeVocabulary,
    entities: Vec<Entity>,
    stats: IngestStats,
    surfaces: u64,
    index_bytes: u64,
}

pub fn to_bytes(kb: &KbStore) -> Result<Vec<u8>> {
    let mut index = Vec::new();
    for (surface, entries) in &kb.alias_index {
        put_str(&mut index, surface);
        index.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for e in entries {
            put_str(&mut index, &e.entity_id);
            index.extend_from_slice(&e.count.to_le_bytes());
            index.extend_from_slice(&e.prior.to_le_bytes());
        }
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        type_vocab: kb.type_vocab.clone(),
        entities: kb.entities.values().cloned().collect(),
        stats: kb.stats.clone(),
        surfaces: kb.alias_index.len() as u64,
        index_bytes: index.len() as u64,
    };
    let json = serde_json::to_vec(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + json.len() + index.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&index);
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<KbStore> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(8)? != MAGIC {
        return Err(Error::Format("not a knowledge-base file".into()));
    }
    let len = cur.u64()? as usize;
    let manifest: Manifest =
        serde_json::from_slice(cur.take(len)?).map_err(|e| Error::Format(e.to_string()))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported knowledge-base version {}",
            manifest.format_version
        )));
    }
    if (bytes.len() - cur.pos) as u64 != manifest.index_bytes {
        return Err(Error::Format("alias index size mismatch".into()));
    }
    let type_vocab = manifest.type_vocab;
    let entities: BTreeMap<String, Entity> = manifest
        .entities
        .into_iter()
        .map(|e| (e.id.clone(), e))
        .collect();
    let mut alias_index = BTreeMap::new();
    for _ in 0..manifest.surfaces {
        let surface = cur.string()?;
        let n = cur.u32()? as usize;
        let mut entries = Vec::with_capacity(n);
        for _ in 0..n {
            let entity_id = cur.string()?;
            if !entities.contains_key(&entity_id) {
                return Err(Error::Format(format!(
                    "alias `{surface}` points at unknown entity `{entity_id}`"
                )));
            }
            let count = cur.u64()?;
            let prior = f64::from_le_bytes(cur.take(8)?.try_into().expect("8 bytes"));
            entries.push(AliasEntry {
                entity_id,
                count,
                prior,
            });
        }
        alias_index.insert(surface, entries);
    }
    Ok(KbStore {
        entities,
        alias_index,
        type_vocab,
        stats: manifest.stats,
    })
}

pub fn save(kb: &KbStore, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(kb)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<KbStore> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("truncated knowledge-base file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Format(e.to_string()))
    }
}
