//! Greedy choice of the type set that best separates gold entities from
//! their negative candidates.
//!
//! An example is separated by a selection `S` when, for every negative, the
//! gold entity's types restricted to `S` differ from the negative's types
//! restricted to `S`; a perfect type predictor limited to `S` could then tell
//! the gold entity apart from all of its competitors.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::candidates::generate;
use crate::corpus::Document;
use crate::kb::{KbStore, TypeId, TypeVocabulary};

pub const DEFAULT_BUDGET: usize = 1400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationExample {
    pub gold_types: BTreeSet<TypeId>,
    pub negative_type_sets: Vec<BTreeSet<TypeId>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExampleStats {
    pub examples: usize,
    /// Mentions whose gold entity is missing from the store.
    pub unresolved_gold: usize,
    /// Mentions with no negative candidate.
    pub no_negatives: usize,
}

/// One example per gold-labelled mention with at least one negative
/// candidate among the top `cap`.
pub fn build_separation_examples(
    corpus: &[Document],
    store: &KbStore,
    cap: usize,
) -> (Vec<SeparationExample>, ExampleStats) {
    let mut stats = ExampleStats::default();
    let mut out = Vec::new();
    for doc in corpus {
        for m in &doc.mentions {
            let Some(gold_id) = m.entity_id.as_deref() else { continue };
            let Some(gold) = store.get(gold_id) else {
                stats.unresolved_gold += 1;
                continue;
            };
            let cands = generate(store, &doc.surface(m.start, m.end), cap);
            let negatives: Vec<BTreeSet<TypeId>> = cands
                .entries
                .iter()
                .filter(|c| c.entity_id != gold_id)
                .filter_map(|c| store.get(&c.entity_id))
                .map(|e| e.types.clone())
                .collect();
            if negatives.is_empty() {
                stats.no_negatives += 1;
                continue;
            }
            out.push(SeparationExample {
                gold_types: gold.types.clone(),
                negative_type_sets: negatives,
            });
        }
    }
    stats.examples = out.len();
    (out, stats)
}

/// True iff the example has negatives and every one of them projects onto
/// `selected` differently from the gold types.
pub fn separates(selected: &BTreeSet<TypeId>, example: &SeparationExample) -> bool {
    if example.negative_type_sets.is_empty() {
        return false;
    }
    let gold: BTreeSet<&TypeId> = example.gold_types.intersection(selected).collect();
    example
        .negative_type_sets
        .iter()
        .all(|n| n.intersection(selected).collect::<BTreeSet<_>>() != gold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSelection {
    /// Selected types in selection order.
    pub types: Vec<TypeId>,
    /// Number of separated examples after each pick.
    pub coverage: Vec<usize>,
    pub examples: usize,
}

impl TypeSelection {
    pub fn vocabulary(&self, universe: &TypeVocabulary) -> TypeVocabulary {
        universe.restrict(self.types.clone())
    }
}

/// Example with type sets mapped to sorted universe indices.
struct Indexed {
    /// For each negative, the sorted symmetric difference with the gold set.
    diffs: Vec<Vec<u32>>,
}

/// Adds, one at a time, the type that separates the most not-yet-separated
/// examples. Ties go to the type appearing in more examples, then to the
/// smaller `TypeId`. Stops at `budget` types or when no type adds coverage.
pub fn greedy_select_types(
    examples: &[SeparationExample],
    universe: &TypeVocabulary,
    budget: usize,
) -> TypeSelection {
    let index: HashMap<&TypeId, u32> = universe
        .types()
        .iter()
        .enumerate()
        .map(|(i, t)| (t, i as u32))
        .collect();
    let to_idx = |s: &BTreeSet<TypeId>| -> Vec<u32> {
        let mut v: Vec<u32> = s.iter().filter_map(|t| index.get(t).copied()).collect();
        v.sort_unstable();
        v
    };

    let n_types = universe.len();
    let mut frequency = vec![0usize; n_types];
    let mut indexed = Vec::with_capacity(examples.len());
    for ex in examples {
        let gold = to_idx(&ex.gold_types);
        let mut seen: BTreeSet<u32> = gold.iter().copied().collect();
        let diffs: Vec<Vec<u32>> = ex
            .negative_type_sets
            .iter()
            .map(|n| {
                let n = to_idx(n);
                seen.extend(n.iter().copied());
                sym_diff(&gold, &n)
            })
            .collect();
        for t in seen {
            frequency[t as usize] += 1;
        }
        indexed.push(Indexed { diffs });
    }

    let mut selected = vec![false; n_types];
    // Per example, which negatives are still indistinguishable from gold.
    let mut open: Vec<Vec<usize>> = indexed
        .iter()
        .map(|ex| (0..ex.diffs.len()).collect())
        .collect();
    let mut separated = vec![false; indexed.len()];
    for (i, ex) in indexed.iter().enumerate() {
        if ex.diffs.is_empty() {
            open[i].clear();
        }
    }

    let mut out = TypeSelection {
        types: Vec::new(),
        coverage: Vec::new(),
        examples: examples.len(),
    };
    let mut covered = 0usize;
    let mut gain = vec![0usize; n_types];
    while out.types.len() < budget.min(n_types) {
        gain.iter_mut().for_each(|g| *g = 0);
        for (i, ex) in indexed.iter().enumerate() {
            if separated[i] || ex.diffs.is_empty() {
                continue;
            }
            // Types that distinguish gold from every still-open negative.
            let mut common: Option<Vec<u32>> = None;
            for &n in &open[i] {
                let d = &ex.diffs[n];
                common = Some(match common {
                    None => d.clone(),
                    Some(c) => intersect(&c, d),
                });
                if common.as_ref().is_some_and(Vec::is_empty) {
                    break;
                }
            }
            for t in common.unwrap_or_default() {
                if !selected[t as usize] {
                    gain[t as usize] += 1;
                }
            }
        }
        let best = (0..n_types)
            .filter(|&t| !selected[t] && gain[t] > 0)
            .max_by(|&a, &b| {
                gain[a]
                    .cmp(&gain[b])
                    .then(frequency[a].cmp(&frequency[b]))
                    .then_with(|| universe.types()[b].cmp(&universe.types()[a]))
            });
        let Some(best) = best else { break };
        selected[best] = true;
        let best = best as u32;
        for (i, ex) in indexed.iter().enumerate() {
            if separated[i] || ex.diffs.is_empty() {
                continue;
            }
            open[i].retain(|&n| ex.diffs[n].binary_search(&best).is_err());
            if open[i].is_empty() {
                separated[i] = true;
                covered += 1;
            }
        }
        out.types.push(universe.types()[best as usize].clone());
        out.coverage.push(covered);
    }
    out
}

fn sym_diff(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() || j < b.len() {
        match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) if x == y => {
                i += 1;
                j += 1;
            }
            (Some(x), Some(y)) if x < y => {
                out.push(*x);
                i += 1;
            }
            (Some(_), Some(y)) => {
                out.push(*y);
                j += 1;
            }
            (Some(x), None) => {
                out.push(*x);
                i += 1;
            }
            (None, Some(y)) => {
                out.push(*y);
                j += 1;
            }
            (None, None) => break,
        }
    }
    out
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j, mut out) = (0, 0, Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
        }
    }
    out
}
