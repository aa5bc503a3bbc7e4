//! Generated corpora and knowledge bases with known structure, used by the
//! test suites and the benchmark.
//!
//! Entities come in groups of five that share one surface form, so every
//! mention has five candidates. By prior rank within a group:
//!
//! - ranks 0 and 1 share description and types, so only the prior tells
//!   them apart;
//! - ranks 2 and 3 share a description but not their types;
//! - ranks 3 and 4 share their types but not a description.
//!
//! A mention is preceded by the two type names of a member, the two keywords
//! of a member's description, or uninformative words, and its gold entity is
//! the most frequent group member the cue fits. Uninformative words include
//! keywords no member's description has, so a keyword only counts when it
//! matches; type names are always truthful. Each of the three scores therefore decides some
//! mentions that the other two cannot. Ids are shuffled within a group so
//! that an exact tie broken by id is no better than chance.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Document, Mention};
use crate::error::Result;
use crate::kb::{Entity, Hierarchy, HierarchyEdge, KbStore, TypeId, TypeVocabulary, DEFAULT_RELATIONS};

const SURFACES: [&str; 10] = [
    "alder", "birch hall", "cedar", "dune park", "ember", "fjord bay", "grove", "heath end", "isle",
    "juniper cross",
];
const CATEGORIES: [&str; 10] = [
    "novel", "film", "ship", "engine", "painting", "river", "bridge", "festival", "stadium", "island",
];
const PARENTS: [&str; 2] = ["artifact", "place"];
const COUNTRIES: [&str; 8] = [
    "norland", "estavia", "kelmar", "suvania", "drossia", "ventor", "lorca", "tamberg",
];
const KEYWORDS: [&str; 25] = [
    "violin", "harbor", "granite", "orchid", "comet", "lantern", "meadow", "copper", "falcon",
    "glacier", "saffron", "anchor", "velvet", "thunder", "marble", "willow", "jasper", "quartz",
    "cobalt", "harvest", "pepper", "tundra", "silver", "cascade", "beacon",
];
const FILLERS: [&str; 16] = [
    "the", "a", "we", "saw", "heard", "about", "then", "later", "it", "was", "noted", "again",
    "they", "said", "that", "today",
];
/// Alias counts by prior rank within a group.
const COUNTS: [u64; 5] = [50, 20, 15, 10, 5];
/// Type set and description slot of each rank.
const TYPE_SLOT: [usize; 5] = [0, 0, 1, 2, 2];
const DESC_SLOT: [usize; 5] = [0, 0, 1, 1, 2];
/// Ranks that may be held out, rotated by group.
const HOLDABLE: [usize; 3] = [2, 3, 4];
pub const GROUP_SIZE: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cue {
    None,
    Type(usize),
    Description(usize),
}

/// Cue classes a sentence draws from uniformly.
const CUES: [Cue; 7] = [
    Cue::None,
    Cue::Type(0),
    Cue::Type(1),
    Cue::Type(2),
    Cue::Description(0),
    Cue::Description(1),
    Cue::Description(2),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub groups: usize,
    pub docs: usize,
    /// Fraction of documents in the test split.
    pub test_fraction: f64,
    /// Entities per group kept out of every training mention.
    pub held_out_per_group: usize,
    /// Trailing groups kept out of every training mention.
    pub held_out_groups: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            groups: 10,
            docs: 800,
            test_fraction: 0.2,
            held_out_per_group: 0,
            held_out_groups: 0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub entities: Vec<Entity>,
    /// Ids that never occur in `train`.
    pub held_out: BTreeSet<String>,
    pub types: TypeVocabulary,
    pub train: Vec<Document>,
    pub test: Vec<Document>,
}

impl SyntheticData {
    /// Store with every entity, or without the held-out ones.
    pub fn store(&self, with_held_out: bool) -> Result<KbStore> {
        let entities = self
            .entities
            .iter()
            .filter(|e| with_held_out || !self.held_out.contains(&e.id))
            .cloned()
            .collect();
        KbStore::from_entities(entities, self.types.clone())
    }

    pub fn held_out_entities(&self) -> impl Iterator<Item = &Entity> {
        self.entities.iter().filter(|e| self.held_out.contains(&e.id))
    }
}

pub fn type_vocabulary() -> TypeVocabulary {
    let instance = |o: &str| TypeId::new("instance of", o);
    let edges = CATEGORIES.iter().enumerate().map(|(i, c)| HierarchyEdge {
        child: instance(c),
        parent: instance(PARENTS[i / 5]),
    });
    let hierarchy = Hierarchy::new(edges).expect("acyclic");
    let types = CATEGORIES
        .iter()
        .chain(PARENTS.iter())
        .map(|o| instance(o))
        .chain(COUNTRIES.iter().map(|c| TypeId::new("country", *c)))
        .collect();
    TypeVocabulary::new(types, hierarchy, &DEFAULT_RELATIONS)
}

struct Group {
    surface: &'static str,
    /// Entity ids by prior rank.
    members: Vec<String>,
    /// Category and country words of each type slot.
    type_words: [[&'static str; 2]; 3],
    /// Keywords of each description slot.
    desc_words: [[&'static str; 2]; 3],
    /// Fillers plus keywords no member has.
    foreign: Vec<&'static str>,
}

impl Group {
    /// Context words for `cue`, in random order.
    fn words(&self, cue: Cue, rng: &mut ChaCha8Rng) -> Vec<&'static str> {
        let mut words = match cue {
            Cue::None => {
                let n = rng.gen_range(1..=2);
                self.foreign.choose_multiple(rng, n).copied().collect()
            }
            Cue::Type(t) => self.type_words[t].to_vec(),
            Cue::Description(d) => self.desc_words[d].to_vec(),
        };
        words.shuffle(rng);
        words
    }

    /// Most frequent member the cue fits.
    fn gold(&self, cue: Cue) -> usize {
        (0..GROUP_SIZE)
            .find(|&r| match cue {
                Cue::None => true,
                Cue::Type(t) => TYPE_SLOT[r] == t,
                Cue::Description(d) => DESC_SLOT[r] == d,
            })
            .expect("every slot has a member")
    }
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    assert!(spec.groups <= SURFACES.len(), "at most {} groups", SURFACES.len());
    assert!(
        spec.held_out_per_group <= HOLDABLE.len(),
        "at most {} held out per group",
        HOLDABLE.len()
    );
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut entities = Vec::new();
    let mut groups = Vec::new();
    let mut held_out = BTreeSet::new();
    for (g, surface) in SURFACES.iter().take(spec.groups).enumerate() {
        let mut cats: Vec<&str> = CATEGORIES.to_vec();
        let mut countries: Vec<&str> = COUNTRIES.to_vec();
        let mut words: Vec<&str> = KEYWORDS.to_vec();
        let mut slots: Vec<usize> = (0..GROUP_SIZE).collect();
        cats.shuffle(&mut rng);
        countries.shuffle(&mut rng);
        words.shuffle(&mut rng);
        slots.shuffle(&mut rng);
        let type_words = [0, 1, 2].map(|t| [cats[t], countries[t]]);
        let desc_words = [0, 1, 2].map(|d| [words[2 * d], words[2 * d + 1]]);
        let foreign = FILLERS
            .iter()
            .chain(&words[6..])
            .copied()
            .collect();
        let mut members = Vec::new();
        for r in 0..GROUP_SIZE {
            let id = format!("E{g:02}_{}", slots[r]);
            let [cat, country] = type_words[TYPE_SLOT[r]];
            let [k0, k1] = desc_words[DESC_SLOT[r]];
            entities.push(Entity {
                id: id.clone(),
                label: surface.to_string(),
                description: format!("{k0} {k1}"),
                types: [
                    TypeId::new("instance of", cat),
                    TypeId::new("country", country),
                ]
                .into(),
                aliases: vec![],
                prior_counts: [(surface.to_string(), COUNTS[r])].into(),
            });
            members.push(id);
        }
        if g + spec.held_out_groups >= spec.groups {
            held_out.extend(members.iter().cloned());
        }
        for k in 0..spec.held_out_per_group {
            let r = HOLDABLE[(g + k) % HOLDABLE.len()];
            held_out.insert(members[r].clone());
        }
        groups.push(Group {
            surface,
            members,
            type_words,
            desc_words,
            foreign,
        });
    }
    entities.sort_by(|a, b| a.id.cmp(&b.id));

    let n_test = (spec.docs as f64 * spec.test_fraction).round() as usize;
    let mut train = Vec::new();
    let mut test = Vec::new();
    for d in 0..spec.docs {
        let is_test = d >= spec.docs - n_test;
        let sentences = rng.gen_range(1..=3);
        let mut tokens: Vec<String> = Vec::new();
        let mut mentions = Vec::new();
        for _ in 0..sentences {
            let seen = groups.len() - spec.held_out_groups;
            let group = &groups[rng.gen_range(0..if is_test { groups.len() } else { seen })];
            let (cue, gold) = loop {
                let cue = *CUES.choose(&mut rng).expect("cues");
                let gold = &group.members[group.gold(cue)];
                if is_test || !held_out.contains(gold) {
                    break (cue, gold.clone());
                }
            };
            let words = group.words(cue, &mut rng);
            sentence(&mut rng, &mut tokens, &mut mentions, group.surface, &words, gold);
        }
        let doc = Document {
            doc_id: format!("doc{d:04}"),
            tokens,
            mentions,
        };
        if is_test {
            test.push(doc);
        } else {
            train.push(doc);
        }
    }
    SyntheticData {
        entities,
        held_out,
        types: type_vocabulary(),
        train,
        test,
    }
}

fn sentence(
    rng: &mut ChaCha8Rng,
    tokens: &mut Vec<String>,
    mentions: &mut Vec<Mention>,
    surface: &str,
    cue: &[&str],
    gold: String,
) {
    for _ in 0..rng.gen_range(0..3) {
        tokens.push(FILLERS.choose(rng).expect("fillers").to_string());
    }
    tokens.extend(cue.iter().map(|w| w.to_string()));
    let start = tokens.len();
    tokens.extend(surface.split(' ').map(String::from));
    mentions.push(Mention {
        start,
        end: tokens.len(),
        entity_id: Some(gold),
    });
    for _ in 0..rng.gen_range(1..3) {
        tokens.push(FILLERS.choose(rng).expect("fillers").to_string());
    }
    tokens.push(".".into());
}

/// A corpus of `docs` single-sentence-per-mention documents with exactly
/// `mentions` mentions in total, spread as evenly as possible, over the
/// entities of the first `groups` groups.
pub fn bench_corpus(
    docs: usize,
    mentions: usize,
    groups: usize,
    seed: u64,
) -> (Vec<Document>, Vec<Entity>, TypeVocabulary) {
    let data = generate(&SyntheticSpec {
        groups,
        docs: 0,
        seed,
        ..SyntheticSpec::default()
    });
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let base = mentions / docs.max(1);
    let extra = mentions % docs.max(1);
    let mut out = Vec::with_capacity(docs);
    for d in 0..docs {
        let k = base + usize::from(d < extra);
        let mut tokens = Vec::new();
        let mut ms = Vec::new();
        for _ in 0..k {
            let e = data.entities.choose(&mut rng).expect("entities");
            sentence(&mut rng, &mut tokens, &mut ms, &e.label, &[], e.id.clone());
        }
        out.push(Document {
            doc_id: format!("bench{d:04}"),
            tokens,
            mentions: ms,
        });
    }
    (out, data.entities, data.types)
}
