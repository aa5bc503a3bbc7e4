use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::chunk::chunk_document;
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::kb::KbStore;
use crate::model::{DescriptionCache, ElModel, ScoreAblation, ScoredCandidate};

/// A scored mention in document token space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedMention {
    pub start: usize,
    pub end: usize,
    /// `None` is NIL.
    pub entity_id: Option<String>,
    pub score: f32,
    pub candidates: Vec<ScoredCandidate>,
}

/// One output line of `link` / `disambiguate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkedDocument {
    pub doc_id: String,
    pub mentions: Vec<LinkedMention>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Predict spans with the detection head.
    Link,
    /// Use the document's gold spans.
    Disambiguate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InferenceOptions {
    pub chunk_len: usize,
    pub num_candidates: usize,
    pub ablation: ScoreAblation,
}

impl InferenceOptions {
    pub fn from_config(cfg: &crate::config::Config) -> Self {
        Self {
            chunk_len: cfg.eval_sequence_length,
            num_candidates: cfg.num_candidates,
            ablation: ScoreAblation::default(),
        }
    }
}

fn run(
    doc: &Document,
    model: &ElModel,
    store: &KbStore,
    opts: &InferenceOptions,
    cache: &mut DescriptionCache,
    mode: Mode,
) -> Result<Vec<LinkedMention>> {
    let source;
    let doc = match mode {
        Mode::Disambiguate => doc,
        Mode::Link => {
            source = Document {
                mentions: Vec::new(),
                ..doc.clone()
            };
            &source
        }
    };
    let chunk_len = opts.chunk_len.min(model.shape().max_seq_len);
    let mut out = Vec::new();
    for chunk in chunk_document(doc, chunk_len)? {
        let ids = model.vocab().encode(&chunk.tokens);
        let spans: Vec<(usize, usize)> = chunk.mentions.iter().map(|m| (m.start, m.end)).collect();
        let gold = (mode == Mode::Disambiguate).then_some(spans.as_slice());
        let scored = model.infer_chunk(
            &chunk.tokens,
            &ids,
            gold,
            store,
            opts.num_candidates,
            cache,
            opts.ablation,
        )?;
        out.extend(scored.into_iter().map(|s| LinkedMention {
            start: s.start + chunk.offset,
            end: s.end + chunk.offset,
            entity_id: s.entity_id,
            score: s.score,
            candidates: s.candidates,
        }));
    }
    Ok(out)
}

/// End-to-end linking: predicted spans, one encoder pass per chunk.
pub fn link(
    doc: &Document,
    model: &ElModel,
    store: &KbStore,
    opts: &InferenceOptions,
    cache: &mut DescriptionCache,
) -> Result<Vec<LinkedMention>> {
    run(doc, model, store, opts, cache, Mode::Link)
}

/// Disambiguation of the document's own spans.
pub fn disambiguate(
    doc: &Document,
    model: &ElModel,
    store: &KbStore,
    opts: &InferenceOptions,
    cache: &mut DescriptionCache,
) -> Result<Vec<LinkedMention>> {
    run(doc, model, store, opts, cache, Mode::Disambiguate)
}

/// Runs `mode` over a corpus on `threads` workers; output order follows input.
pub fn annotate_corpus(
    docs: &[Document],
    model: &ElModel,
    store: &KbStore,
    opts: &InferenceOptions,
    mode: Mode,
    threads: usize,
) -> Result<Vec<LinkedDocument>> {
    model.check_store(store)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| {
        docs.par_iter()
            .map_init(DescriptionCache::new, |cache, doc| {
                Ok(LinkedDocument {
                    doc_id: doc.doc_id.clone(),
                    mentions: run(doc, model, store, opts, cache, mode)?,
                })
            })
            .collect()
    })
}
