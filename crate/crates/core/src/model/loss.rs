use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{candidate_inputs, ElModel, ScoreAblation};
use crate::bio::encode_bio;
use crate::candidates::{CandidateSet, GoldSlot};
use crate::error::{Error, Result};
use crate::kb::KbStore;
use crate::nn::{Graph, Tensor, Var};

/// One gold mention of a chunk with its training targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionTarget {
    pub start: usize,
    pub end: usize,
    /// Candidates with the gold slot filled in (NIL when the gold entity is
    /// missing or absent).
    pub candidates: CandidateSet,
    /// Binary type vector of the gold entity, when it is in the KB.
    pub gold_types: Option<Vec<f32>>,
}

/// A chunk's token ids (possibly masked) and its gold mentions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionBatch {
    pub tokens: Vec<u32>,
    pub mentions: Vec<MentionTarget>,
}

/// The weighted total as a graph node plus the unweighted term values.
#[derive(Debug, Clone)]
pub struct LossTerms {
    pub total: Var,
    /// One scalar per contributing chunk or mention, already multiplied by
    /// its term's weight over the term's contributor count; `total` is their
    /// sum.
    pub parts: Vec<Var>,
    pub md: f32,
    pub typing: f32,
    pub description: f32,
    pub combined: f32,
}

/// Weighted sum of the detection, typing, description and combined losses
/// over a set of chunks. Each term is averaged over the chunks or mentions
/// that contribute to it: typing needs a gold entity in the KB, the
/// description loss needs the gold entity among the candidates, the combined
/// loss takes every mention (NIL as target when needed).
pub fn joint_loss(
    model: &ElModel,
    g: &mut Graph,
    batches: &[MentionBatch],
    store: &KbStore,
    weights: [f32; 4],
) -> Result<LossTerms> {
    let mut desc_rows: BTreeMap<&str, Var> = BTreeMap::new();
    for b in batches {
        for m in &b.mentions {
            for c in &m.candidates.entries {
                if desc_rows.contains_key(c.entity_id.as_str()) {
                    continue;
                }
                let e = store.get(&c.entity_id).ok_or_else(|| {
                    Error::Invalid(format!("candidate `{}` not in store", c.entity_id))
                })?;
                let v = model.description_embedding(g, &model.describe_entity(e))?;
                desc_rows.insert(&c.entity_id, v);
            }
        }
    }

    let (mut md, mut typing, mut desc, mut comb) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for b in batches {
        let h = model.encode_chunk(g, &b.tokens)?;
        let spans: Vec<(usize, usize)> = b.mentions.iter().map(|m| (m.start, m.end)).collect();
        let gold_bio = encode_bio(b.tokens.len(), &spans)?;
        let logits = model.md_logits(g, h)?;
        md.push(model.md_loss(g, logits, &gold_bio)?);

        for m in &b.mentions {
            let emb = model.mention_embedding(g, h, m.start, m.end)?;
            let probs = model.typing_probs(g, emb)?;
            if let Some(t) = &m.gold_types {
                typing.push(g.bce(probs, t)?);
            }
            let gold = m.candidates.gold_class().ok_or_else(|| {
                Error::Invalid("mention target has no gold slot".into())
            })?;
            if m.candidates.is_empty() {
                // Only NIL: a single zero logit, loss 0 with no gradient.
                let nil = g.constant(Tensor::zeros(1, 1));
                comb.push(g.cross_entropy(nil, &[0])?);
                continue;
            }
            let (_, type_mat, priors) = candidate_inputs(store, &m.candidates)?;
            let rows: Vec<Var> = m
                .candidates
                .entries
                .iter()
                .map(|c| desc_rows[c.entity_id.as_str()])
                .collect();
            let d = g.concat_rows(&rows)?;
            let type_mat = g.constant(type_mat);
            let priors = g.constant(priors);
            let s = model.score_candidates(g, emb, probs, d, type_mat, priors, ScoreAblation::default())?;
            if let Some(GoldSlot::Entity(i)) = m.candidates.gold {
                desc.push(g.cross_entropy(s.psi, &[i])?);
            }
            comb.push(g.cross_entropy(s.logits, &[gold])?);
        }
    }

    let terms = [md, typing, desc, comb];
    let means = terms.each_ref().map(|vs| {
        let sum: f64 = vs.iter().map(|&v| g.value(v).item() as f64).sum();
        (sum / vs.len().max(1) as f64) as f32
    });
    let mut parts = Vec::new();
    for (vs, w) in terms.iter().zip(weights) {
        let k = w / vs.len().max(1) as f32;
        parts.extend(vs.iter().map(|&v| g.scale(v, k)));
    }
    let total = if parts.is_empty() {
        g.constant(Tensor::scalar(0.0))
    } else {
        let all = g.concat_rows(&parts)?;
        g.sum(all)
    };
    Ok(LossTerms {
        total,
        parts,
        md: means[0],
        typing: means[1],
        description: means[2],
        combined: means[3],
    })
}
