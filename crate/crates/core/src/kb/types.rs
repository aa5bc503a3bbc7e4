use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const DEFAULT_RELATIONS: [&str; 4] = ["instance of", "occupation", "country", "sport"];

/// A relation–object pair such as `(instance of, song)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TypeId {
    pub relation: String,
    pub object: String,
}

impl TypeId {
    pub fn new(relation: impl Into<String>, object: impl Into<String>) -> Self {
        Self {
            relation: relation.into(),
            object: object.into(),
        }
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.relation, self.object)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HierarchyEdge {
    pub child: TypeId,
    pub parent: TypeId,
}

/// Acyclic child → parent edges between types.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<HierarchyEdge>", try_from = "Vec<HierarchyEdge>")]
pub struct Hierarchy {
    parents: BTreeMap<TypeId, BTreeSet<TypeId>>,
}

impl Hierarchy {
    pub fn new(edges: impl IntoIterator<Item = HierarchyEdge>) -> Result<Self> {
        let mut parents: BTreeMap<TypeId, BTreeSet<TypeId>> = BTreeMap::new();
        for e in edges {
            parents.entry(e.child).or_default().insert(e.parent);
        }
        let h = Self { parents };
        h.check_acyclic()?;
        Ok(h)
    }

    pub fn edges(&self) -> impl Iterator<Item = HierarchyEdge> + '_ {
        self.parents.iter().flat_map(|(c, ps)| {
            ps.iter().map(move |p| HierarchyEdge {
                child: c.clone(),
                parent: p.clone(),
            })
        })
    }

    pub fn parents(&self, t: &TypeId) -> impl Iterator<Item = &TypeId> {
        self.parents.get(t).into_iter().flatten()
    }

    fn check_acyclic(&self) -> Result<()> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Active,
            Done,
        }
        let mut marks: HashMap<&TypeId, Mark> = HashMap::new();
        for root in self.parents.keys() {
            if marks.contains_key(root) {
                continue;
            }
            // Iterative DFS; the bool says whether children were already pushed.
            let mut stack = vec![(root, false)];
            while let Some((node, expanded)) = stack.pop() {
                if expanded {
                    marks.insert(node, Mark::Done);
                    continue;
                }
                match marks.get(node) {
                    Some(Mark::Done) => continue,
                    Some(Mark::Active) => return Err(Error::HierarchyCycle(node.to_string())),
                    None => {}
                }
                marks.insert(node, Mark::Active);
                stack.push((node, true));
                for p in self.parents(node) {
                    match marks.get(p) {
                        Some(Mark::Active) => return Err(Error::HierarchyCycle(p.to_string())),
                        Some(Mark::Done) => {}
                        None => stack.push((p, false)),
                    }
                }
            }
        }
        Ok(())
    }
}

impl From<Hierarchy> for Vec<HierarchyEdge> {
    fn from(h: Hierarchy) -> Self {
        h.edges().collect()
    }
}

impl TryFrom<Vec<HierarchyEdge>> for Hierarchy {
    type Error = Error;

    fn try_from(edges: Vec<HierarchyEdge>) -> Result<Self> {
        Hierarchy::new(edges)
    }
}

/// Transitive closure of `types` under the hierarchy's parent edges.
pub fn expand_types(types: &BTreeSet<TypeId>, hierarchy: &Hierarchy) -> BTreeSet<TypeId> {
    let mut out = types.clone();
    let mut frontier: Vec<&TypeId> = types.iter().collect();
    while let Some(t) = frontier.pop() {
        for p in hierarchy.parents(t) {
            if out.insert(p.clone()) {
                frontier.push(p);
            }
        }
    }
    out
}

/// The frozen, ordered type set `T`; position `k` of an entity's type vector
/// refers to `types()[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr")]
pub struct TypeVocabulary {
    types: Vec<TypeId>,
    hierarchy: Hierarchy,
    relations: Vec<String>,
    #[serde(skip)]
    index: HashMap<TypeId, usize>,
}

#[derive(Deserialize)]
struct VocabularyRepr {
    types: Vec<TypeId>,
    hierarchy: Hierarchy,
    relations: Vec<String>,
}

impl From<VocabularyRepr> for TypeVocabulary {
    fn from(r: VocabularyRepr) -> Self {
        let mut v = Self {
            types: r.types,
            hierarchy: r.hierarchy,
            relations: r.relations,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }
}

impl TypeVocabulary {
    /// Builds a vocabulary in the given order. Types whose relation is not in
    /// `relations` are dropped; duplicates keep their first position.
    pub fn new(types: Vec<TypeId>, hierarchy: Hierarchy, relations: &[&str]) -> Self {
        let relations: Vec<String> = relations.iter().map(|r| r.to_string()).collect();
        let mut seen = BTreeSet::new();
        let types = types
            .into_iter()
            .filter(|t| relations.contains(&t.relation) && seen.insert(t.clone()))
            .collect();
        let mut v = Self {
            types,
            hierarchy,
            relations,
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Every whitelisted type reachable from `entity_types` through the
    /// hierarchy, sorted lexicographically.
    pub fn universe<'a>(
        entity_types: impl IntoIterator<Item = &'a TypeId>,
        hierarchy: Hierarchy,
        relations: &[&str],
    ) -> Self {
        let base: BTreeSet<TypeId> = entity_types
            .into_iter()
            .filter(|t| relations.contains(&t.relation.as_str()))
            .cloned()
            .collect();
        let all = expand_types(&base, &hierarchy);
        Self::new(all.into_iter().collect(), hierarchy, relations)
    }

    /// Same hierarchy and whitelist, restricted to `types` in that order.
    pub fn restrict(&self, types: Vec<TypeId>) -> Self {
        let rels: Vec<&str> = self.relations.iter().map(String::as_str).collect();
        Self::new(types, self.hierarchy.clone(), &rels)
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self
            .types
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn types(&self) -> &[TypeId] {
        &self.types
    }

    pub fn hierarchy(&self) -> &Hierarchy {
        &self.hierarchy
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn allows_relation(&self, relation: &str) -> bool {
        self.relations.iter().any(|r| r == relation)
    }

    pub fn index_of(&self, t: &TypeId) -> Option<usize> {
        self.index.get(t).copied()
    }

    pub fn contains(&self, t: &TypeId) -> bool {
        self.index.contains_key(t)
    }

    /// Binary membership vector over the vocabulary as plain floats.
    pub fn membership(&self, types: &BTreeSet<TypeId>) -> Vec<f32> {
        self.types
            .iter()
            .map(|t| if types.contains(t) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// `[1, |T|]` binary vector with a 1 wherever the entity has that type.
pub fn type_vector(types: &BTreeSet<TypeId>, vocab: &TypeVocabulary) -> Tensor {
    Tensor::row_vector(vocab.membership(types))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(o: &str) -> TypeId {
        TypeId::new("instance of", o)
    }

    fn edge(c: &str, p: &str) -> HierarchyEdge {
        HierarchyEdge {
            child: t(c),
            parent: t(p),
        }
    }

    #[test]
    fn expansion_examples() {
        let h = Hierarchy::new([edge("a", "b"), edge("b", "c")]).unwrap();
        assert!(expand_types(&BTreeSet::new(), &h).is_empty());
        let got = expand_types(&[t("a")].into(), &h);
        assert_eq!(got, [t("a"), t("b"), t("c")].into());
        let empty = Hierarchy::default();
        assert_eq!(expand_types(&[t("a")].into(), &empty), [t("a")].into());
    }

    #[test]
    fn business_implies_organisation() {
        let h = Hierarchy::new([edge("business", "organisation")]).unwrap();
        let got = expand_types(&[t("business")].into(), &h);
        assert!(got.contains(&t("organisation")));
    }

    #[test]
    fn cycles_are_rejected() {
        let err = Hierarchy::new([edge("a", "b"), edge("b", "c"), edge("c", "a")]);
        assert!(matches!(err, Err(Error::HierarchyCycle(_))));
        assert!(Hierarchy::new([edge("a", "a")]).is_err());
        // A diamond is fine.
        Hierarchy::new([edge("a", "b"), edge("a", "c"), edge("b", "d"), edge("c", "d")]).unwrap();
    }

    #[test]
    fn type_vector_examples() {
        let vocab = TypeVocabulary::new(
            vec![t("song"), t("film")],
            Hierarchy::default(),
            &DEFAULT_RELATIONS,
        );
        assert_eq!(type_vector(&[t("film")].into(), &vocab).data(), &[0.0, 1.0]);
        assert_eq!(type_vector(&BTreeSet::new(), &vocab).data(), &[0.0, 0.0]);
        let all: BTreeSet<_> = vocab.types().iter().cloned().collect();
        assert_eq!(type_vector(&all, &vocab).data(), &[1.0, 1.0]);
    }

    #[test]
    fn vocabulary_drops_non_whitelisted_relations() {
        let vocab = TypeVocabulary::new(
            vec![t("x"), TypeId::new("color", "red"), TypeId::new("sport", "golf")],
            Hierarchy::default(),
            &DEFAULT_RELATIONS,
        );
        assert_eq!(vocab.len(), 2);
        assert_eq!(vocab.index_of(&TypeId::new("sport", "golf")), Some(1));
    }
}
