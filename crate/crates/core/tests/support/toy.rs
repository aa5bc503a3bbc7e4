//! A toy-sized model, store and batch built from the synthetic generator.

use typelink::candidates::generate as candidates;
use typelink::kb::KbStore;
use typelink::model::{ElModel, MentionBatch, MentionTarget, ModelShape};
use typelink::pipeline::{build_vocab, Trainer};
use typelink::Config;
use typelink::synthetic::{generate, SyntheticData, SyntheticSpec};

pub fn data(seed: u64) -> SyntheticData {
    generate(&SyntheticSpec {
        groups: 2,
        docs: 4,
        test_fraction: 0.0,
        held_out_per_group: 0,
        held_out_groups: 0,
        seed,
    })
}

pub fn shape(vocab_size: usize, num_types: usize) -> ModelShape {
    ModelShape {
        vocab_size,
        num_types,
        embed_dim: 8,
        num_heads: 2,
        ffn_dim: 16,
        mention_layers: 2,
        description_layers: 1,
        max_seq_len: 64,
        description_tokens: 8,
        proj_dim: 4,
        dropout: 0.0,
    }
}

/// Model, store and two chunks of targets; the first mention of the second
/// chunk has its gold entity removed from the candidates.
pub fn model(seed: u64) -> (ElModel, KbStore, Vec<MentionBatch>) {
    let data = data(seed);
    let store = data.store(true).unwrap();
    let vocab = build_vocab(&data.train, &store, 1);
    let shape = shape(vocab.len(), store.type_vocab().len());
    let model = ElModel::new(shape, vocab, store.type_vocab().clone(), seed).unwrap();
    let mut batches = Vec::new();
    for (d, doc) in data.train.iter().take(2).enumerate() {
        let mut mentions = Vec::new();
        for (i, m) in doc.mentions.iter().enumerate() {
            let gold = m.entity_id.as_deref();
            let mut cands = candidates(&store, &doc.surface(m.start, m.end), 30);
            if d == 1 && i == 0 {
                cands.entries.retain(|c| Some(c.entity_id.as_str()) != gold);
            }
            mentions.push(MentionTarget {
                start: m.start,
                end: m.end,
                candidates: cands.with_gold(gold),
                gold_types: gold
                    .and_then(|g| store.get(g))
                    .map(|e| store.type_vocab().membership(&e.types)),
            });
        }
        batches.push(MentionBatch {
            tokens: model.vocab().encode(&doc.tokens),
            mentions,
        });
    }
    (model, store, batches)
}

/// A tiny config that trains in seconds.
pub fn tiny_config(steps: u64) -> Config {
    Config {
        learning_rate: 3e-3,
        batch_size: 8,
        max_sequence_length: 64,
        eval_sequence_length: 64,
        dropout: 0.0,
        description_embedding_dim: 8,
        num_candidates: 30,
        mention_mask_prob: 0.5,
        mention_encoder_layers: 1,
        description_encoder_layers: 1,
        description_tokens: 8,
        embed_dim: 16,
        num_heads: 2,
        ffn_dim: 32,
        training_steps: steps,
        ..Config::default()
    }
}

/// Generated data with a few groups, and a trainer over it.
pub fn trainer(seed: u64, steps: u64) -> (Trainer, KbStore, SyntheticData) {
    let data = generate(&SyntheticSpec {
        groups: 3,
        docs: 60,
        seed,
        ..SyntheticSpec::default()
    });
    let store = data.store(true).unwrap();
    let t = Trainer::new(&data.train, &store, &tiny_config(steps), seed).unwrap();
    (t, store, data)
}
