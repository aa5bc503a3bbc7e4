mod support;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::selection::{coverage, greedy_vs_oracle, optimum, random_instance, Instance, APPROX};
use typelink::kb::{Hierarchy, TypeId, TypeVocabulary, DEFAULT_RELATIONS};
use typelink::type_selection::{greedy_select_types, separates, SeparationExample};

#[test]
fn greedy_meets_the_bound_on_a_hundred_random_instances() {
    let worst = greedy_vs_oracle(100, 0).unwrap();
    assert!(worst >= APPROX);
}

#[test]
fn bound_violations_are_rare() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut below = 0;
    for _ in 0..2000 {
        let inst = random_instance(&mut rng);
        let sel = greedy_select_types(&inst.examples, &inst.universe, inst.budget);
        let got = coverage(&sel.types.iter().cloned().collect(), &inst.examples);
        if (got as f64) < APPROX * optimum(&inst) as f64 {
            below += 1;
        }
    }
    println!("{below} of 2000 instances below the bound");
    assert!(below <= 20, "{below} of 2000 instances below the bound");
}

/// Two negatives that each need a different type: no single type separates
/// the example, so greedy stops at zero while a pair separates it.
#[test]
fn greedy_can_stall_on_jointly_separable_examples() {
    let t = |o: &str| TypeId::new("instance of", o);
    let inst = Instance {
        universe: TypeVocabulary::new(vec![t("a"), t("b")], Hierarchy::default(), &DEFAULT_RELATIONS),
        examples: vec![SeparationExample {
            gold_types: BTreeSet::new(),
            negative_type_sets: vec![[t("a")].into(), [t("b")].into()],
        }],
        budget: 2,
    };
    let sel = greedy_select_types(&inst.examples, &inst.universe, inst.budget);
    assert!(sel.types.is_empty());
    assert_eq!(optimum(&inst), 1);
}

#[test]
fn separation_survives_adding_types() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let inst = random_instance(&mut rng);
        let types = inst.universe.types();
        for mask in 0u32..1 << types.len().min(8) {
            let s: BTreeSet<TypeId> = (0..types.len()).filter(|i| mask >> i & 1 == 1).map(|i| types[i].clone()).collect();
            for ex in inst.examples.iter().filter(|e| separates(&s, e)) {
                for t in types {
                    let mut bigger = s.clone();
                    bigger.insert(t.clone());
                    assert!(separates(&bigger, ex));
                }
            }
        }
    }
}
