mod support;

use support::toy;
use typelink::corpus::{Document, Mention};
use typelink::eval::{benchmark, Regime};
use typelink::kb::{Entity, KbStore};
use typelink::model::{ElModel, ScoreAblation};
use typelink::pipeline::{build_vocab, InferenceOptions};
use typelink::synthetic::{bench_corpus, type_vocabulary};

fn options() -> InferenceOptions {
    InferenceOptions {
        chunk_len: 512,
        num_candidates: 30,
        ablation: ScoreAblation::default(),
    }
}

fn model_for(corpus: &[Document], store: &KbStore) -> ElModel {
    let vocab = build_vocab(corpus, store, 1);
    let mut shape = toy::shape(vocab.len(), store.type_vocab().len());
    shape.max_seq_len = 512;
    shape.description_tokens = 8;
    ElModel::new(shape, vocab, store.type_vocab().clone(), 0).unwrap()
}

#[test]
fn one_chunk_ten_mentions_thirty_candidates() {
    let entities = (0..30)
        .map(|i| Entity {
            id: format!("E{i:02}"),
            label: "x".into(),
            description: format!("thing number {i}"),
            types: Default::default(),
            aliases: vec![],
            prior_counts: [("x".to_string(), 1 + i as u64)].into(),
        })
        .collect();
    let store = KbStore::from_entities(entities, type_vocabulary()).unwrap();
    let doc = Document {
        doc_id: "d".into(),
        tokens: (0..20).map(|i| if i % 2 == 0 { "x" } else { "and" }.to_string()).collect(),
        mentions: (0..10)
            .map(|i| Mention { start: 2 * i, end: 2 * i + 1, entity_id: None })
            .collect(),
    };
    let corpus = vec![doc];
    let model = model_for(&corpus, &store);
    let counts: Vec<u64> = Regime::ALL
        .iter()
        .map(|&r| benchmark(&corpus, &model, &store, &options(), r).unwrap().0.encoder_passes)
        .collect();
    assert_eq!(counts, [1, 10, 300]);
}

#[test]
fn single_pass_and_bi_encoder_predict_the_same() {
    let (corpus, entities, types) = bench_corpus(6, 40, 10, 2);
    let store = KbStore::from_entities(entities, types).unwrap();
    let model = model_for(&corpus, &store);
    let (single, a) = benchmark(&corpus, &model, &store, &options(), Regime::SinglePass).unwrap();
    let (bi, b) = benchmark(&corpus, &model, &store, &options(), Regime::BiEncoder).unwrap();
    let (cross, _) = benchmark(&corpus, &model, &store, &options(), Regime::CrossEncoder).unwrap();
    assert_eq!((single.chunks, single.mentions), (6, 40));
    assert_eq!(single.encoder_passes, 6);
    assert_eq!(bi.encoder_passes, 40);
    assert_eq!(cross.encoder_passes, cross.candidates_total);
    assert!(single.encoder_passes < bi.encoder_passes && bi.encoder_passes < cross.encoder_passes);
    for (x, y) in a.iter().zip(&b) {
        for (m, n) in x.mentions.iter().zip(&y.mentions) {
            assert_eq!(m.entity_id, n.entity_id);
            assert!((m.score - n.score).abs() <= 1e-5);
        }
    }
}
