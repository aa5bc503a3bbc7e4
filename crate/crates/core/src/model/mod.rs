//! The linking model: a mention encoder shared by four heads (mention
//! detection, entity typing, description matching and the combined score)
//! plus a separate description encoder.

mod io;
mod loss;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::bio::{decode_bio, Bio};
use crate::candidates::{generate, CandidateSet};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::kb::{Entity, KbStore, TypeVocabulary};
use crate::nn::{Encoder, EncoderConfig, Graph, Linear, ParamId, ParamStore, Tensor, Var};
use crate::text::{tokenize, Vocab};

pub use io::{load_checkpoint, save_checkpoint, Checkpoint, TrainState};
pub use loss::{joint_loss, LossTerms, MentionBatch, MentionTarget};

/// Architecture hyperparameters; everything needed to rebuild the parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelShape {
    pub vocab_size: usize,
    pub num_types: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub mention_layers: usize,
    pub description_layers: usize,
    pub max_seq_len: usize,
    pub description_tokens: usize,
    pub proj_dim: usize,
    pub dropout: f32,
}

impl ModelShape {
    pub fn from_config(cfg: &Config, vocab_size: usize, num_types: usize) -> Self {
        Self {
            vocab_size,
            num_types,
            embed_dim: cfg.embed_dim,
            num_heads: cfg.num_heads,
            ffn_dim: cfg.ffn_dim,
            mention_layers: cfg.mention_encoder_layers,
            description_layers: cfg.description_encoder_layers,
            max_seq_len: cfg.max_sequence_length.max(cfg.eval_sequence_length),
            description_tokens: cfg.description_tokens,
            proj_dim: cfg.description_embedding_dim,
            dropout: cfg.dropout,
        }
    }
}

/// Which inputs of the combined score are forced to zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreAblation {
    pub no_types: bool,
    pub no_descriptions: bool,
    pub no_priors: bool,
}

/// Per-candidate scores for one mention.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub entity_id: String,
    pub prior: f64,
    pub phi: f32,
    pub psi: f32,
    pub omega: f32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredMention {
    pub start: usize,
    pub end: usize,
    /// `None` is NIL.
    pub entity_id: Option<String>,
    pub score: f32,
    pub candidates: Vec<ScoredCandidate>,
}

/// Differentiable scores of one mention against its candidates.
pub struct CandidateScores {
    /// `[1, c]` description scores.
    pub psi: Var,
    /// `[1, c]` typing distances.
    pub phi: Var,
    /// `[1, c + 1]` combined scores; the last entry is the fixed NIL logit.
    pub logits: Var,
}

#[derive(Debug, Clone)]
pub struct ElModel {
    shape: ModelShape,
    params: ParamStore,
    mention_encoder: Encoder,
    description_encoder: Encoder,
    md_head: Linear,
    f1: Linear,
    f2: Linear,
    f3: Linear,
    f4: Linear,
    vocab: Vocab,
    types: TypeVocabulary,
}

impl ElModel {
    pub fn new(shape: ModelShape, vocab: Vocab, types: TypeVocabulary, seed: u64) -> Result<Self> {
        if vocab.len() != shape.vocab_size || types.len() != shape.num_types {
            return Err(Error::Invalid("model shape does not match vocabularies".into()));
        }
        if shape.num_types == 0 {
            return Err(Error::Validation("type vocabulary is empty".into()));
        }
        if shape.description_tokens > shape.max_seq_len {
            return Err(Error::Invalid("description_tokens exceeds max_seq_len".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let enc = |layers: usize, max_seq_len: usize| EncoderConfig {
            vocab_size: shape.vocab_size,
            embed_dim: shape.embed_dim,
            num_layers: layers,
            num_heads: shape.num_heads,
            ffn_dim: shape.ffn_dim,
            max_seq_len,
            dropout_rate: shape.dropout,
        };
        let mention_encoder = Encoder::new(
            "mention_encoder",
            enc(shape.mention_layers, shape.max_seq_len),
            &mut params,
            &mut rng,
        )?;
        let description_encoder = Encoder::new(
            "description_encoder",
            enc(shape.description_layers, shape.description_tokens),
            &mut params,
            &mut rng,
        )?;
        let d = shape.embed_dim;
        let md_head = Linear::new(&mut params, "md_head", d, Bio::ALL.len(), &mut rng)?;
        let f1 = Linear::new(&mut params, "f1", d, shape.num_types, &mut rng)?;
        let f2 = Linear::new(&mut params, "f2", d, shape.proj_dim, &mut rng)?;
        let f3 = Linear::new(&mut params, "f3", d, shape.proj_dim, &mut rng)?;
        let f4 = Linear::new(&mut params, "f4", 3, 1, &mut rng)?;
        // The description side starts as a copy of the mention side, so ψ
        // begins as a similarity within one space.
        share_init(&mut params, "mention_encoder.", "description_encoder.");
        share_init(&mut params, "f2.", "f3.");
        Ok(Self {
            shape,
            params,
            mention_encoder,
            description_encoder,
            md_head,
            f1,
            f2,
            f3,
            f4,
            vocab,
            types,
        })
    }

    pub fn shape(&self) -> &ModelShape {
        &self.shape
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn type_vocab(&self) -> &TypeVocabulary {
        &self.types
    }

    pub fn mention_encoder(&self) -> &Encoder {
        &self.mention_encoder
    }

    pub fn description_encoder(&self) -> &Encoder {
        &self.description_encoder
    }

    /// Weights `(ψ, φ, prior)` and bias of the combined-score layer.
    pub fn f4(&self) -> ([f32; 3], f32) {
        let w = self.params.value(self.f4.weight).data();
        ([w[0], w[1], w[2]], self.params.value(self.f4.bias).data()[0])
    }

    pub fn set_f4(&mut self, weights: [f32; 3], bias: f32) {
        self.params.get_mut(self.f4.weight).value = Tensor::column_vector(weights.to_vec());
        self.params.get_mut(self.f4.bias).value = Tensor::scalar(bias);
    }

    /// Fails unless `store` scores types against this model's vocabulary.
    pub fn check_store(&self, store: &KbStore) -> Result<()> {
        if store.type_vocab().types() != self.types.types() {
            return Err(Error::Validation(
                "knowledge base and model use different type vocabularies".into(),
            ));
        }
        Ok(())
    }

    /// `[n, embed_dim]` contextual embeddings of a chunk; one encoder pass.
    pub fn encode_chunk(&self, g: &mut Graph, tokens: &[u32]) -> Result<Var> {
        self.mention_encoder.encode(g, tokens)
    }

    /// `[n, 3]` B/I/O logits.
    pub fn md_logits(&self, g: &mut Graph, h: Var) -> Result<Var> {
        self.md_head.forward(g, h)
    }

    /// Mean token cross-entropy against gold tags.
    pub fn md_loss(&self, g: &mut Graph, logits: Var, gold: &[Bio]) -> Result<Var> {
        let (n, _) = g.shape(logits);
        if gold.len() != n {
            return Err(Error::Shape(format!("{n} logit rows, {} gold tags", gold.len())));
        }
        let targets: Vec<usize> = gold.iter().map(|t| t.index()).collect();
        g.cross_entropy(logits, &targets)
    }

    /// Average-pooled `[1, d]` embedding of tokens `[start, end)`.
    pub fn mention_embedding(&self, g: &mut Graph, h: Var, start: usize, end: usize) -> Result<Var> {
        g.mean_rows(h, start, end)
    }

    /// `σ(f1(m))`, one row per mention.
    pub fn typing_probs(&self, g: &mut Graph, m: Var) -> Result<Var> {
        let z = self.f1.forward(g, m)?;
        Ok(g.sigmoid(z))
    }

    /// Token ids of `[CLS] label [SEP] description [SEP]`, with the
    /// description cut so the whole sequence fits `description_tokens`.
    pub fn describe_entity(&self, entity: &Entity) -> Vec<u32> {
        let budget = self.shape.description_tokens;
        let mut ids = vec![self.vocab.cls()];
        let label = self.vocab.encode(&tokenize(&entity.label));
        ids.extend(label.iter().take(budget.saturating_sub(3)));
        ids.push(self.vocab.sep());
        let room = budget.saturating_sub(ids.len() + 1);
        ids.extend(self.vocab.encode(&tokenize(&entity.description)).into_iter().take(room));
        ids.push(self.vocab.sep());
        ids
    }

    /// `[1, d]` output at the `[CLS]` position.
    pub fn description_embedding(&self, g: &mut Graph, ids: &[u32]) -> Result<Var> {
        let h = self.description_encoder.encode(g, ids)?;
        g.slice_rows(h, 0, 1)
    }

    /// Evaluation-mode description embedding as a plain tensor.
    pub fn embed_description(&self, entity: &Entity) -> Result<Tensor> {
        let mut g = Graph::new(&self.params, false, 0);
        let d = self.description_embedding(&mut g, &self.describe_entity(entity))?;
        Ok(g.value(d).clone())
    }

    /// Scores one mention (`m`, `probs`: single rows) against `c` candidates
    /// with description embeddings `desc` `[c, d]`, type vectors `type_mat`
    /// `[c, |T|]` and priors `priors` `[c, 1]`.
    #[allow(clippy::too_many_arguments)]
    pub fn score_candidates(
        &self,
        g: &mut Graph,
        m: Var,
        probs: Var,
        desc: Var,
        type_mat: Var,
        priors: Var,
        ablation: ScoreAblation,
    ) -> Result<CandidateScores> {
        let (c, _) = g.shape(desc);
        let pm = self.f2.forward(g, m)?;
        let pd = self.f3.forward(g, desc)?;
        let psi_col = g.matmul_bt(pd, pm)?;
        let diff = g.sub_row(type_mat, probs)?;
        let phi_col = g.row_norms(diff);
        let zero = |g: &mut Graph| g.constant(Tensor::zeros(c, 1));
        let f_psi = if ablation.no_descriptions { zero(g) } else { psi_col };
        let f_phi = if ablation.no_types { zero(g) } else { phi_col };
        let f_prior = if ablation.no_priors { zero(g) } else { priors };
        let features = g.concat_cols(&[f_psi, f_phi, f_prior])?;
        let omega_col = self.f4.forward(g, features)?;
        let omega = g.transpose(omega_col);
        let nil = g.constant(Tensor::zeros(1, 1));
        let logits = g.concat_cols(&[omega, nil])?;
        let psi = g.transpose(psi_col);
        let phi = g.transpose(phi_col);
        Ok(CandidateScores { psi, phi, logits })
    }

    /// ω for explicit inputs, outside any graph.
    pub fn combined_score(&self, psi: f32, phi: f32, prior: f32) -> f32 {
        let (w, b) = self.f4();
        w[0] * psi + w[1] * phi + w[2] * prior + b
    }

    /// Runs one encoder pass over a chunk and scores every mention. `words`
    /// are the chunk's surface tokens, used for candidate lookup. Spans come
    /// from the detection head unless `gold_spans` is given.
    #[allow(clippy::too_many_arguments)]
    pub fn infer_chunk(
        &self,
        words: &[String],
        tokens: &[u32],
        gold_spans: Option<&[(usize, usize)]>,
        store: &KbStore,
        cap: usize,
        cache: &mut DescriptionCache,
        ablation: ScoreAblation,
    ) -> Result<Vec<ScoredMention>> {
        if words.len() != tokens.len() {
            return Err(Error::Shape(format!(
                "{} words vs {} token ids",
                words.len(),
                tokens.len()
            )));
        }
        let mut g = Graph::new(&self.params, false, 0);
        let h = self.encode_chunk(&mut g, tokens)?;
        let spans = match gold_spans {
            Some(s) => s.to_vec(),
            None => {
                let logits = self.md_logits(&mut g, h)?;
                decode_bio(&argmax_tags(g.value(logits)))
            }
        };
        let mut out = Vec::with_capacity(spans.len());
        for (start, end) in spans {
            if start >= end || end > tokens.len() {
                return Err(Error::Invalid(format!(
                    "span [{start}, {end}) outside chunk of {} tokens",
                    tokens.len()
                )));
            }
            let cands = generate(store, &words[start..end].join(" "), cap);
            out.push(self.score_mention(&mut g, h, start, end, &cands, store, cache, ablation)?);
        }
        Ok(out)
    }

    /// Scores one mention of an already encoded chunk `h`.
    #[allow(clippy::too_many_arguments)]
    pub fn score_mention(
        &self,
        g: &mut Graph,
        h: Var,
        start: usize,
        end: usize,
        cands: &CandidateSet,
        store: &KbStore,
        cache: &mut DescriptionCache,
        ablation: ScoreAblation,
    ) -> Result<ScoredMention> {
        let mut scored = ScoredMention {
            start,
            end,
            entity_id: None,
            score: 0.0,
            candidates: Vec::new(),
        };
        if cands.is_empty() {
            return Ok(scored);
        }
        let (entities, type_mat, priors) = candidate_inputs(store, cands)?;
        let rows = entities
            .iter()
            .map(|e| cache.get(self, e).map(|t| t.data().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        let m = self.mention_embedding(g, h, start, end)?;
        let probs = self.typing_probs(g, m)?;
        let desc = g.constant(Tensor::from_rows(&rows)?);
        let type_mat = g.constant(type_mat);
        let priors = g.constant(priors);
        let s = self.score_candidates(g, m, probs, desc, type_mat, priors, ablation)?;
        let (psi, phi, logits) = (g.value(s.psi), g.value(s.phi), g.value(s.logits));
        for (i, c) in cands.entries.iter().enumerate() {
            scored.candidates.push(ScoredCandidate {
                entity_id: c.entity_id.clone(),
                prior: c.prior,
                phi: phi.data()[i],
                psi: psi.data()[i],
                omega: logits.data()[i],
            });
        }
        let best = scored.candidates.iter().max_by(|a, b| {
            a.omega
                .total_cmp(&b.omega)
                .then_with(|| b.entity_id.cmp(&a.entity_id))
        });
        if let Some(best) = best.filter(|b| b.omega >= 0.0) {
            scored.entity_id = Some(best.entity_id.clone());
            scored.score = best.omega;
        }
        Ok(scored)
    }
}

/// Copies every parameter under prefix `from` onto its namesake under `to`.
/// Tables of different length (position embeddings) share their leading rows.
fn share_init(params: &mut ParamStore, from: &str, to: &str) {
    let pairs: Vec<(ParamId, ParamId)> = params
        .iter()
        .filter_map(|(dst, p)| {
            let rest = p.name.strip_prefix(to)?;
            Some((params.id(&format!("{from}{rest}"))?, dst))
        })
        .collect();
    for (src, dst) in pairs {
        let value = params.value(src).clone();
        let target = &mut params.get_mut(dst).value;
        if target.cols() == value.cols() && target.rows() <= value.rows() {
            let n = target.len();
            target.data_mut().copy_from_slice(&value.data()[..n]);
        }
    }
}

/// Argmax tag per row of `[n, 3]` logits.
pub fn argmax_tags(logits: &Tensor) -> Vec<Bio> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = j;
                }
            }
            Bio::from_index(best).expect("three tag classes")
        })
        .collect()
}

/// Evaluation-mode description embeddings keyed by entity id.
#[derive(Debug, Default)]
pub struct DescriptionCache {
    embeddings: HashMap<String, Tensor>,
}

impl DescriptionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn get(&mut self, model: &ElModel, entity: &Entity) -> Result<&Tensor> {
        if !self.embeddings.contains_key(&entity.id) {
            let t = model.embed_description(entity)?;
            self.embeddings.insert(entity.id.clone(), t);
        }
        Ok(&self.embeddings[&entity.id])
    }
}

/// Replaces every token of each span by `mask_id` with probability `prob`
/// per span.
pub fn mask_mentions<R: Rng>(
    tokens: &mut [u32],
    spans: &[(usize, usize)],
    prob: f32,
    mask_id: u32,
    rng: &mut R,
) {
    for &(s, e) in spans {
        if rng.gen::<f32>() < prob {
            tokens[s..e].iter_mut().for_each(|t| *t = mask_id);
        }
    }
}

/// Plain-number typing distance `‖probs − c‖₂`.
pub fn typing_score(probs: &[f32], c: &[f32]) -> Result<f32> {
    if probs.len() != c.len() {
        return Err(Error::Shape(format!("{} probs vs {} types", probs.len(), c.len())));
    }
    Ok(probs.iter().zip(c).map(|(p, t)| (p - t) * (p - t)).sum::<f32>().sqrt())
}

/// Plain-number description score `a · b`.
pub fn description_score(a: &[f32], b: &[f32]) -> Result<f32> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} projection dims", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
}

pub(crate) fn candidate_inputs<'s>(
    store: &'s KbStore,
    cands: &CandidateSet,
) -> Result<(Vec<&'s Entity>, Tensor, Tensor)> {
    let mut entities = Vec::with_capacity(cands.len());
    let mut types = Vec::with_capacity(cands.len());
    let mut priors = Vec::with_capacity(cands.len());
    for c in &cands.entries {
        let e = store
            .get(&c.entity_id)
            .ok_or_else(|| Error::Invalid(format!("candidate `{}` not in store", c.entity_id)))?;
        types.push(store.type_vocab().membership(&e.types));
        priors.push(c.prior as f32);
        entities.push(e);
    }
    Ok((entities, Tensor::from_rows(&types)?, Tensor::column_vector(priors)))
}
