use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::candidates::{generate, CandidateSet};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::kb::KbStore;
use crate::model::{DescriptionCache, ElModel, ScoredCandidate, ScoredMention};
use crate::nn::Graph;
use crate::pipeline::{chunk_document, InferenceOptions, LinkedDocument, LinkedMention};

/// How mentions and candidates are fed to the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// One pass per chunk scores every mention in it.
    SinglePass,
    /// One pass per mention, re-encoding its chunk.
    BiEncoder,
    /// One pass per (mention, candidate) over the chunk followed by the
    /// candidate's description.
    CrossEncoder,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::SinglePass, Regime::BiEncoder, Regime::CrossEncoder];

    pub fn name(self) -> &'static str {
        match self {
            Regime::SinglePass => "single_pass",
            Regime::BiEncoder => "bi_encoder",
            Regime::CrossEncoder => "cross_encoder",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown regime `{s}`")))
    }
}

/// Instrumented pass counts of one regime over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassAccounting {
    pub regime: Regime,
    /// Mention-encoder passes.
    pub encoder_passes: u64,
    /// Description-encoder passes, one per distinct candidate entity.
    pub entity_encodings: u64,
    pub mentions: u64,
    pub chunks: u64,
    pub candidates_total: u64,
    pub wall_time_ms: u64,
}

/// Links the corpus's gold spans under `regime` and reads the encoder pass
/// counters. Runs sequentially so the counters see only this call.
pub fn benchmark(
    corpus: &[Document],
    model: &ElModel,
    store: &KbStore,
    opts: &InferenceOptions,
    regime: Regime,
) -> Result<(PassAccounting, Vec<LinkedDocument>)> {
    model.check_store(store)?;
    let start = Instant::now();
    let mention_before = model.mention_encoder().passes();
    let entity_before = model.description_encoder().passes();
    let chunk_len = opts.chunk_len.min(model.shape().max_seq_len);
    let mut cache = DescriptionCache::new();
    let mut acc = PassAccounting {
        regime,
        encoder_passes: 0,
        entity_encodings: 0,
        mentions: 0,
        chunks: 0,
        candidates_total: 0,
        wall_time_ms: 0,
    };
    let mut out = Vec::with_capacity(corpus.len());
    for doc in corpus {
        let mut mentions = Vec::new();
        for chunk in chunk_document(doc, chunk_len)? {
            acc.chunks += 1;
            let ids = model.vocab().encode(&chunk.tokens);
            let mut g = Graph::new(model.params(), false, 0);
            let shared = match regime {
                Regime::SinglePass => Some(model.encode_chunk(&mut g, &ids)?),
                _ => None,
            };
            for m in &chunk.mentions {
                acc.mentions += 1;
                let cands = generate(store, &chunk.tokens[m.start..m.end].join(" "), opts.num_candidates);
                acc.candidates_total += cands.len() as u64;
                let scored = match regime {
                    Regime::SinglePass | Regime::BiEncoder => {
                        let h = match shared {
                            Some(h) => h,
                            None => model.encode_chunk(&mut g, &ids)?,
                        };
                        model.score_mention(&mut g, h, m.start, m.end, &cands, store, &mut cache, opts.ablation)?
                    }
                    Regime::CrossEncoder => {
                        let mut best: Option<ScoredCandidate> = None;
                        let mut all = Vec::with_capacity(cands.len());
                        for c in &cands.entries {
                            let entity = store.get(&c.entity_id).expect("candidate from this store");
                            let mut pair = ids.clone();
                            let room = model.shape().max_seq_len.saturating_sub(pair.len());
                            pair.extend(model.describe_entity(entity).into_iter().skip(1).take(room));
                            let h = model.encode_chunk(&mut g, &pair)?;
                            let single = CandidateSet {
                                surface: cands.surface.clone(),
                                entries: vec![c.clone()],
                                gold: None,
                            };
                            let s = model.score_mention(&mut g, h, m.start, m.end, &single, store, &mut cache, opts.ablation)?;
                            let sc = s.candidates.into_iter().next().expect("one candidate");
                            if best.as_ref().map_or(true, |b| {
                                sc.omega > b.omega || (sc.omega == b.omega && sc.entity_id < b.entity_id)
                            }) {
                                best = Some(sc.clone());
                            }
                            all.push(sc);
                        }
                        let chosen = best.filter(|b| b.omega >= 0.0);
                        ScoredMention {
                            start: m.start,
                            end: m.end,
                            score: chosen.as_ref().map_or(0.0, |b| b.omega),
                            entity_id: chosen.map(|b| b.entity_id),
                            candidates: all,
                        }
                    }
                };
                mentions.push(LinkedMention {
                    start: scored.start + chunk.offset,
                    end: scored.end + chunk.offset,
                    entity_id: scored.entity_id,
                    score: scored.score,
                    candidates: scored.candidates,
                });
            }
        }
        out.push(LinkedDocument {
            doc_id: doc.doc_id.clone(),
            mentions,
        });
    }
    acc.encoder_passes = model.mention_encoder().passes() - mention_before;
    acc.entity_encodings = model.description_encoder().passes() - entity_before;
    acc.wall_time_ms = start.elapsed().as_millis() as u64;
    Ok((acc, out))
}
