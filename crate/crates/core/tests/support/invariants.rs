//! Property checks shared by the invariant tests and the acceptance run.
//! Each returns the first counterexample as an error message.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use typelink::bio::{decode_bio, encode_bio};
use typelink::candidates::{generate, training_subsample, GoldSlot};
use typelink::corpus::{Document, Mention};
use typelink::kb::KbStore;
use typelink::model::{typing_score, DescriptionCache, ElModel, ScoreAblation};
use typelink::nn::{Graph, ParamStore, Tensor};
use typelink::pipeline::{chunk_document, disambiguate, link, InferenceOptions};

pub type Check = Result<(), String>;

pub const SOFTMAX_TOL: f64 = 1e-6;

/// Sorted, non-overlapping, non-empty spans over `len` tokens.
pub fn random_spans(rng: &mut ChaCha8Rng, len: usize) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut i = 0;
    while i < len {
        i += rng.gen_range(0..4);
        if i >= len {
            break;
        }
        let end = (i + rng.gen_range(1..4)).min(len);
        spans.push((i, end));
        i = end;
    }
    spans
}

pub fn bio_round_trip(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let len = rng.gen_range(0..60);
        let spans = random_spans(&mut rng, len);
        let tags = encode_bio(len, &spans).map_err(|e| e.to_string())?;
        if decode_bio(&tags) != spans {
            return Err(format!("spans {spans:?} decode to {:?}", decode_bio(&tags)));
        }
    }
    Ok(())
}

/// `0 <= phi <= sqrt(|T|)` for random probabilities and type vectors.
pub fn phi_bounds(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..cases {
        let t = rng.gen_range(1..40);
        let probs: Vec<f32> = (0..t).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let c: Vec<f32> = (0..t).map(|_| rng.gen_bool(0.5) as u8 as f32).collect();
        let phi = typing_score(&probs, &c).map_err(|e| e.to_string())?;
        if !(0.0..=(t as f32).sqrt() + 1e-6).contains(&phi) {
            return Err(format!("phi {phi} outside [0, sqrt({t})]"));
        }
    }
    Ok(())
}

/// Every candidate's phi from the model itself stays within bounds.
pub fn model_phi_bounds(model: &ElModel, store: &KbStore, docs: &[Document]) -> Check {
    let bound = (store.type_vocab().len() as f32).sqrt() + 1e-5;
    let opts = InferenceOptions {
        chunk_len: 64,
        num_candidates: 30,
        ablation: ScoreAblation::default(),
    };
    let mut cache = DescriptionCache::new();
    for d in docs {
        for m in disambiguate(d, model, store, &opts, &mut cache).map_err(|e| e.to_string())? {
            if let Some(c) = m.candidates.iter().find(|c| !(0.0..=bound).contains(&c.phi)) {
                return Err(format!("{}: phi {} outside [0, {bound}]", d.doc_id, c.phi));
            }
        }
    }
    Ok(())
}

/// Softmax rows sum to one within `SOFTMAX_TOL`, including large logits.
pub fn softmax_normalised(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ParamStore::new();
    for _ in 0..cases {
        let (r, c) = (rng.gen_range(1..6), rng.gen_range(1..50));
        let scale = *[1.0f32, 30.0, 500.0].choose(&mut rng).expect("scales");
        let data: Vec<f32> = (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect();
        let mut g = Graph::new(&params, false, 0);
        let x = g.constant(Tensor::matrix(r, c, data).expect("shape"));
        let s = g.softmax(x);
        for i in 0..r {
            let row = g.value(s).row(i);
            let sum: f64 = row.iter().map(|&v| v as f64).sum();
            if (sum - 1.0).abs() > SOFTMAX_TOL || row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(format!("row sums to {sum}"));
            }
        }
    }
    Ok(())
}

/// Chunks tile the document, keep every mention whole and shift offsets
/// consistently.
pub fn chunk_partition(cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let len = rng.gen_range(0..80);
        let spans = random_spans(&mut rng, len);
        let doc = Document {
            doc_id: format!("d{case}"),
            tokens: (0..len).map(|i| format!("t{i}")).collect(),
            mentions: spans
                .iter()
                .map(|&(start, end)| Mention { start, end, entity_id: None })
                .collect(),
        };
        let chunk_len = rng.gen_range(3..20);
        let chunks = chunk_document(&doc, chunk_len).map_err(|e| e.to_string())?;
        let mut tokens = Vec::new();
        let mut mentions = Vec::new();
        for c in &chunks {
            if c.offset != tokens.len() || c.tokens.is_empty() || c.tokens.len() > chunk_len {
                return Err(format!("{}: bad chunk at offset {}", doc.doc_id, c.offset));
            }
            mentions.extend(c.mentions.iter().map(|m| Mention {
                start: m.start + c.offset,
                end: m.end + c.offset,
                entity_id: m.entity_id.clone(),
            }));
            tokens.extend(c.tokens.iter().cloned());
        }
        if tokens != doc.tokens || mentions != doc.mentions {
            return Err(format!("{}: chunks do not reassemble the document", doc.doc_id));
        }
    }
    Ok(())
}

/// Candidate generation is capped, prior-ordered and deterministic; the
/// training subsample is a subset holding the gold entity or pointing at NIL.
pub fn candidate_contracts(store: &KbStore, cases: usize, seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let surfaces: Vec<&String> = store.surfaces().map(|(s, _)| s).collect();
    let ids: Vec<&str> = store.entities().map(|e| e.id.as_str()).collect();
    for _ in 0..cases {
        let surface = *surfaces.choose(&mut rng).ok_or("empty store")?;
        let cap = rng.gen_range(1..8);
        let full = generate(store, surface, cap);
        if full != generate(store, surface, cap) {
            return Err(format!("`{surface}`: generation is not deterministic"));
        }
        if full.len() > cap || full.entries.windows(2).any(|w| w[0].prior < w[1].prior) {
            return Err(format!("`{surface}`: more than {cap} entries or not by prior"));
        }
        let gold = if rng.gen_bool(0.2) { Some("no-such-entity") } else { ids.choose(&mut rng).copied() };
        let s = rng.gen();
        let sub = training_subsample(&full, gold, s);
        if sub != training_subsample(&full, gold, s) {
            return Err(format!("`{surface}`: subsample is not deterministic"));
        }
        if sub.len() > 5 || sub.entries.iter().any(|c| !full.entries.contains(c)) {
            return Err(format!("`{surface}`: subsample is not a subset of at most 5"));
        }
        let in_full = gold.is_some_and(|g| full.position(g).is_some());
        match sub.gold {
            Some(GoldSlot::Entity(i)) if in_full && Some(sub.entries[i].entity_id.as_str()) == gold => {}
            Some(GoldSlot::Nil) if !in_full => {}
            other => return Err(format!("`{surface}`: gold slot {other:?} for {gold:?}")),
        }
    }
    Ok(())
}

/// Feeding the spans `link` predicted back as gold spans reproduces its
/// output exactly. Returns the number of spans compared.
pub fn link_disambiguate_agree(model: &ElModel, store: &KbStore, docs: &[Document]) -> Result<usize, String> {
    let opts = InferenceOptions {
        chunk_len: 64,
        num_candidates: 30,
        ablation: ScoreAblation::default(),
    };
    let mut cache = DescriptionCache::new();
    let mut compared = 0;
    for d in docs {
        let linked = link(d, model, store, &opts, &mut cache).map_err(|e| e.to_string())?;
        let same_spans = Document {
            mentions: linked
                .iter()
                .map(|m| Mention { start: m.start, end: m.end, entity_id: None })
                .collect(),
            ..d.clone()
        };
        let given = disambiguate(&same_spans, model, store, &opts, &mut cache).map_err(|e| e.to_string())?;
        if given != linked {
            return Err(format!("{}: link and disambiguate disagree", d.doc_id));
        }
        compared += linked.len();
    }
    Ok(compared)
}
