//! Fixtures shared by the benchmarks: an untrained model over the generated
//! knowledge base and a corpus with a fixed mention count.

use typelink::corpus::Document;
use typelink::kb::KbStore;
use typelink::model::{ElModel, ModelShape};
use typelink::pipeline::{build_vocab, InferenceOptions};
use typelink::synthetic::bench_corpus;
use typelink::Config;

pub struct Fixture {
    pub model: ElModel,
    pub store: KbStore,
    pub corpus: Vec<Document>,
    pub options: InferenceOptions,
}

/// `docs` single-chunk documents holding `mentions` mentions in total.
pub fn fixture(docs: usize, mentions: usize, seed: u64) -> Fixture {
    let (corpus, entities, types) = bench_corpus(docs, mentions, 10, seed);
    let store = KbStore::from_entities(entities, types).expect("generated entities are valid");
    let config = Config::default();
    let vocab = build_vocab(&corpus, &store, 1);
    let shape = ModelShape::from_config(&config, vocab.len(), store.type_vocab().len());
    let model = ElModel::new(shape, vocab, store.type_vocab().clone(), seed).expect("valid shape");
    Fixture {
        model,
        store,
        corpus,
        options: InferenceOptions::from_config(&config),
    }
}
