//! Knowledge base: entities, type vocabulary with hierarchy, and the alias
//! prior table used for candidate generation.

pub mod container;
mod store;
mod types;

use std::path::Path;

pub use store::{AliasEntry, Entity, IngestStats, KbStore};
pub use types::{
    expand_types, type_vector, Hierarchy, HierarchyEdge, TypeId, TypeVocabulary,
    DEFAULT_RELATIONS,
};

use crate::corpus::read_jsonl;
use crate::error::Result;

pub fn read_hierarchy(path: &Path) -> Result<Hierarchy> {
    let edges: Vec<HierarchyEdge> = read_jsonl(path)?;
    Hierarchy::new(edges)
}

/// Builds a store from an entity file. The vocabulary is `selected` (kept in
/// that order) when given, otherwise every whitelisted type reachable from
/// the entities.
pub fn build_from_files(
    entities: &Path,
    hierarchy: Option<&Path>,
    selected: Option<Vec<TypeId>>,
    relations: &[&str],
) -> Result<KbStore> {
    let hierarchy = match hierarchy {
        Some(p) => read_hierarchy(p)?,
        None => Hierarchy::default(),
    };
    let records: Vec<Entity> = read_jsonl(entities)?;
    let vocab = match selected {
        Some(types) => TypeVocabulary::new(types, hierarchy, relations),
        None => TypeVocabulary::universe(records.iter().flat_map(|e| &e.types), hierarchy, relations),
    };
    KbStore::from_entities(records, vocab)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn build_save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ents = dir.path().join("e.jsonl");
        let hier = dir.path().join("h.jsonl");
        let mut f = std::fs::File::create(&ents).unwrap();
        writeln!(f, r#"{{"id": "Q1", "label": "Acme", "description": "a firm", "types": [{{"relation": "instance of", "object": "business"}}], "aliases": ["ACME corp"], "prior_counts": {{"acme": 4}}}}"#).unwrap();
        writeln!(f, r#"{{"id": "Q2", "label": "Acme", "types": [], "aliases": [], "prior_counts": {{"acme": 1}}}}"#).unwrap();
        writeln!(f, r#"{{"id": "Q3", "label": "Zed", "types": [{{"relation": "colour", "object": "red"}}]}}"#).unwrap();
        std::fs::write(
            &hier,
            r#"{"child": {"relation": "instance of", "object": "business"}, "parent": {"relation": "instance of", "object": "organisation"}}"#,
        )
        .unwrap();
        let kb = build_from_files(&ents, Some(&hier), None, &DEFAULT_RELATIONS).unwrap();
        assert_eq!(kb.len(), 3);
        assert_eq!(kb.type_vocab().len(), 2);
        assert_eq!(kb.stats().dropped_types, 1);
        let path = dir.path().join("kb.bin");
        container::save(&kb, &path).unwrap();
        let back = container::load(&path).unwrap();
        assert_eq!(back, kb);
        assert_eq!(back.lookup("acme")[0].entity_id, "Q1");
        assert_eq!(back.lookup("acme corp")[0].entity_id, "Q1");
    }

    #[test]
    fn malformed_entity_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let ents = dir.path().join("e.jsonl");
        std::fs::write(&ents, "{\"id\": \"a\", \"label\": \"x\"}\n{\"id\": 5}\n").unwrap();
        let err = build_from_files(&ents, None, None, &DEFAULT_RELATIONS).unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
    }

    #[test]
    fn truncated_container_is_rejected() {
        let kb = KbStore::new(TypeVocabulary::new(vec![], Hierarchy::default(), &DEFAULT_RELATIONS));
        let kb = kb.add_entity(Entity {
            id: "a".into(),
            label: "x".into(),
            description: String::new(),
            types: Default::default(),
            aliases: vec![],
            prior_counts: Default::default(),
        }).unwrap();
        let bytes = container::to_bytes(&kb).unwrap();
        assert!(container::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert_eq!(container::from_bytes(&bytes).unwrap(), kb);
    }
}
