mod support;

use proptest::prelude::*;
use support::{invariants as inv, toy};
use typelink::bio::{decode_bio, encode_bio};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn bio_round_trips(len in 0usize..60, cuts in proptest::collection::vec((0usize..4, 1usize..4), 0..20)) {
        let mut spans = Vec::new();
        let mut i = 0;
        for (gap, width) in cuts {
            i += gap;
            if i >= len {
                break;
            }
            let end = (i + width).min(len);
            spans.push((i, end));
            i = end;
        }
        let tags = encode_bio(len, &spans).unwrap();
        prop_assert_eq!(decode_bio(&tags), spans);
    }
}

#[test]
fn bio_round_trips_seeded() {
    inv::bio_round_trip(1000, 1).unwrap();
}

#[test]
fn phi_is_bounded() {
    inv::phi_bounds(1000, 2).unwrap();
    let (t, store, data) = toy::trainer(0, 0);
    inv::model_phi_bounds(t.model(), &store, &data.train).unwrap();
}

#[test]
fn softmax_rows_sum_to_one() {
    inv::softmax_normalised(500, 3).unwrap();
}

#[test]
fn chunks_partition_documents() {
    inv::chunk_partition(1000, 4).unwrap();
}

#[test]
fn candidate_sets_keep_their_contracts() {
    let (_, store, _) = toy::trainer(0, 0);
    inv::candidate_contracts(&store, 1000, 5).unwrap();
}

#[test]
fn link_agrees_with_disambiguate_on_its_own_spans() {
    let (mut t, store, data) = toy::trainer(1, 150);
    t.run(&store, |_| Ok(())).unwrap();
    let n = inv::link_disambiguate_agree(t.model(), &store, &data.test).unwrap();
    assert!(n > 0, "detection found no spans to compare");
}
