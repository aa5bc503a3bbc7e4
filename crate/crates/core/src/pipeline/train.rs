use std::path::Path;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chunk::{chunk_document, subsample_mentions, Chunk};
use crate::candidates::{generate, training_subsample};
use crate::config::Config;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::kb::KbStore;
use crate::model::{
    joint_loss, mask_mentions, save_checkpoint, Checkpoint, ElModel, MentionBatch, MentionTarget,
    ModelShape, TrainState,
};
use crate::nn::{Adam, Graph};
use crate::seed::derive;
use crate::text::{tokenize, Vocab};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f32,
    pub md_loss: f32,
    pub typing_loss: f32,
    pub description_loss: f32,
    pub combined_loss: f32,
    pub learning_rate: f32,
}

/// Words of the corpus plus the labels and descriptions of every KB entity.
pub fn build_vocab(corpus: &[Document], store: &KbStore, min_count: usize) -> Vocab {
    let mut words: Vec<String> = corpus
        .iter()
        .flat_map(|d| d.tokens.iter().map(|t| t.to_lowercase()))
        .collect();
    for e in store.entities() {
        words.extend(tokenize(&e.label));
        words.extend(tokenize(&e.description));
    }
    Vocab::build(words.iter().map(String::as_str), min_count)
}

/// Gold ids in `corpus` that `store` does not contain, sorted and deduplicated.
pub fn dangling_references(corpus: &[Document], store: &KbStore) -> Vec<String> {
    let mut missing: Vec<String> = corpus
        .iter()
        .flat_map(|d| d.mentions.iter())
        .filter_map(|m| m.entity_id.as_deref())
        .filter(|id| !store.contains(id))
        .map(String::from)
        .collect();
    missing.sort();
    missing.dedup();
    missing
}

/// Sequential optimiser loop. Everything random in step `s` is derived from
/// the run seed and `s`, so a run resumed from a checkpoint continues
/// bitwise identically.
pub struct Trainer {
    model: ElModel,
    adam: Adam,
    config: Config,
    seed: u64,
    chunks: Vec<Chunk>,
}

impl Trainer {
    pub fn new(corpus: &[Document], store: &KbStore, config: &Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let vocab = build_vocab(corpus, store, config.vocab_min_count);
        let shape = ModelShape::from_config(config, vocab.len(), store.type_vocab().len());
        let model = ElModel::new(shape, vocab, store.type_vocab().clone(), derive(seed, &[b"init"]))?;
        let adam = Adam::new(model.params(), config.learning_rate, config.training_steps);
        Self::assemble(model, adam, corpus, config.clone(), seed)
    }

    /// Continues the run saved in `ckpt`, which must hold optimiser state.
    pub fn resume(ckpt: Checkpoint, corpus: &[Document], store: &KbStore) -> Result<Self> {
        let train = ckpt
            .train
            .ok_or_else(|| Error::Invalid("checkpoint has no optimiser state to resume".into()))?;
        ckpt.model.check_store(store)?;
        Self::assemble(ckpt.model, train.adam, corpus, ckpt.config, ckpt.seed)
    }

    fn assemble(
        model: ElModel,
        adam: Adam,
        corpus: &[Document],
        config: Config,
        seed: u64,
    ) -> Result<Self> {
        let mut chunks = Vec::new();
        for doc in corpus {
            chunks.extend(chunk_document(doc, config.max_sequence_length)?);
        }
        if chunks.is_empty() {
            return Err(Error::Validation("training corpus has no tokens".into()));
        }
        Ok(Self {
            model,
            adam,
            config,
            seed,
            chunks,
        })
    }

    pub fn model(&self) -> &ElModel {
        &self.model
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.adam.step
    }

    pub fn is_done(&self) -> bool {
        self.adam.step >= self.config.training_steps
    }

    pub fn into_model(self) -> ElModel {
        self.model
    }

    /// Chunk indices for `step`: a contiguous window over the concatenation
    /// of per-epoch shuffles.
    fn batch_indices(&self, step: u64) -> Vec<usize> {
        let n = self.chunks.len();
        let b = self.config.batch_size;
        let mut out = Vec::with_capacity(b);
        let mut pos = step as usize * b;
        let mut cached: Option<(usize, Vec<usize>)> = None;
        while out.len() < b {
            let epoch = pos / n;
            if cached.as_ref().map(|c| c.0) != Some(epoch) {
                let mut order: Vec<usize> = (0..n).collect();
                let mut rng =
                    ChaCha8Rng::seed_from_u64(derive(self.seed, &[b"epoch", &epoch.to_le_bytes()]));
                order.shuffle(&mut rng);
                cached = Some((epoch, order));
            }
            out.push(cached.as_ref().expect("filled above").1[pos % n]);
            pos += 1;
        }
        out
    }

    fn make_batch(&self, chunk: &Chunk, store: &KbStore, step: u64, slot: usize) -> Result<MentionBatch> {
        let step_bytes = step.to_le_bytes();
        let offset = chunk.offset.to_le_bytes();
        let id = chunk.doc_id.as_bytes();
        let sub_seed = derive(self.seed, &[b"mentions", id, &offset, &step_bytes]);
        let chunk = subsample_mentions(chunk, self.config.max_mentions_per_chunk, sub_seed);
        let vocab = self.model.vocab();
        let mut tokens = vocab.encode(&chunk.tokens);
        let spans: Vec<(usize, usize)> = chunk.mentions.iter().map(|m| (m.start, m.end)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive(
            self.seed,
            &[b"mask", &step_bytes, &slot.to_le_bytes()],
        ));
        mask_mentions(&mut tokens, &spans, self.config.mention_mask_prob, vocab.mask(), &mut rng);

        let mut mentions = Vec::with_capacity(chunk.mentions.len());
        for m in &chunk.mentions {
            let gold = m.entity_id.as_deref();
            let full = generate(
                store,
                &chunk.tokens[m.start..m.end].join(" "),
                self.config.num_candidates,
            );
            // Seeded by the mention's identity, not the step.
            let doc_pos = (chunk.offset + m.start).to_le_bytes();
            let cand_seed = derive(self.seed, &[b"candidates", id, &doc_pos]);
            let candidates = training_subsample(&full, gold, cand_seed);
            let gold_types = gold
                .and_then(|g| store.get(g))
                .map(|e| store.type_vocab().membership(&e.types));
            mentions.push(MentionTarget {
                start: m.start,
                end: m.end,
                candidates,
                gold_types,
            });
        }
        Ok(MentionBatch { tokens, mentions })
    }

    /// Runs one optimiser step.
    pub fn step(&mut self, store: &KbStore) -> Result<StepLog> {
        let step = self.adam.step;
        let batches = self
            .batch_indices(step)
            .into_iter()
            .enumerate()
            .map(|(slot, i)| self.make_batch(&self.chunks[i], store, step, slot))
            .collect::<Result<Vec<_>>>()?;
        let learning_rate = self.adam.current_lr();
        let (grads, log) = {
            let mut g = Graph::new(
                self.model.params(),
                true,
                derive(self.seed, &[b"dropout", &step.to_le_bytes()]),
            );
            let terms = joint_loss(&self.model, &mut g, &batches, store, self.config.loss_weights)?;
            let log = StepLog {
                step: step + 1,
                loss: g.value(terms.total).item(),
                md_loss: terms.md,
                typing_loss: terms.typing,
                description_loss: terms.description,
                combined_loss: terms.combined,
                learning_rate,
            };
            (g.backward(terms.total)?, log)
        };
        let params = self.model.params_mut();
        params.accumulate(&grads);
        self.adam.update(params);
        debug!("step {} loss {:.4}", log.step, log.loss);
        Ok(log)
    }

    /// Steps until `training_steps`, passing each log line to `on_step`.
    pub fn run<F>(&mut self, store: &KbStore, mut on_step: F) -> Result<()>
    where
        F: FnMut(&StepLog) -> Result<()>,
    {
        while !self.is_done() {
            let log = self.step(store)?;
            on_step(&log)?;
        }
        Ok(())
    }

    /// Writes the model with optimiser state.
    pub fn save(&self, path: &Path) -> Result<()> {
        let state = TrainState {
            adam: self.adam.clone(),
        };
        save_checkpoint(path, &self.model, &self.config, self.seed, Some(&state))
    }
}
