//! Greedy type selection against an exhaustive oracle on small instances.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typelink::kb::{Hierarchy, TypeId, TypeVocabulary, DEFAULT_RELATIONS};
use typelink::type_selection::{greedy_select_types, separates, SeparationExample};

pub const APPROX: f64 = 1.0 - 1.0 / std::f64::consts::E;

pub struct Instance {
    pub universe: TypeVocabulary,
    pub examples: Vec<SeparationExample>,
    pub budget: usize,
}

pub fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n_types = rng.gen_range(1..=12);
    let types: Vec<TypeId> = (0..n_types).map(|i| TypeId::new("instance of", format!("t{i:02}"))).collect();
    let subset = |rng: &mut ChaCha8Rng| -> BTreeSet<TypeId> {
        types.iter().filter(|_| rng.gen_bool(0.35)).cloned().collect()
    };
    let examples = (0..rng.gen_range(1..=50))
        .map(|_| SeparationExample {
            gold_types: subset(rng),
            negative_type_sets: (0..rng.gen_range(1..=4)).map(|_| subset(rng)).collect(),
        })
        .collect();
    Instance {
        universe: TypeVocabulary::new(types.clone(), Hierarchy::default(), &DEFAULT_RELATIONS),
        examples,
        budget: rng.gen_range(1..=4),
    }
}

pub fn coverage(selected: &BTreeSet<TypeId>, examples: &[SeparationExample]) -> usize {
    examples.iter().filter(|e| separates(selected, e)).count()
}

/// Best coverage over every subset of at most `budget` types.
pub fn optimum(inst: &Instance) -> usize {
    let types = inst.universe.types();
    let mut best = 0;
    for mask in 0u32..1 << types.len() {
        if mask.count_ones() as usize > inst.budget {
            continue;
        }
        let s: BTreeSet<TypeId> = (0..types.len()).filter(|i| mask >> i & 1 == 1).map(|i| types[i].clone()).collect();
        best = best.max(coverage(&s, &inst.examples));
    }
    best
}

/// Worst greedy/optimum ratio over `instances`, or the first instance where
/// greedy falls below the bound or differs between two runs.
pub fn greedy_vs_oracle(instances: usize, seed: u64) -> Result<f64, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 1.0f64;
    for k in 0..instances {
        let inst = random_instance(&mut rng);
        let a = greedy_select_types(&inst.examples, &inst.universe, inst.budget);
        let b = greedy_select_types(&inst.examples, &inst.universe, inst.budget);
        if serde_json::to_vec(&a).unwrap() != serde_json::to_vec(&b).unwrap() {
            return Err(format!("instance {k}: greedy is not deterministic"));
        }
        if a.types.len() > inst.budget {
            return Err(format!("instance {k}: {} types over budget {}", a.types.len(), inst.budget));
        }
        let got = coverage(&a.types.iter().cloned().collect(), &inst.examples);
        let opt = optimum(&inst);
        if opt > 0 {
            let ratio = got as f64 / opt as f64;
            worst = worst.min(ratio);
            if ratio < APPROX {
                return Err(format!("instance {k}: greedy {got} vs optimum {opt}"));
            }
        }
    }
    Ok(worst)
}
