use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Mention};
use crate::error::{Error, Result};

/// A contiguous slice of a document. Mention offsets are relative to the chunk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    /// Position of the chunk's first token in the document.
    pub offset: usize,
    pub tokens: Vec<String>,
    pub mentions: Vec<Mention>,
}

/// Splits a document into chunks of at most `chunk_len` tokens, packing
/// greedily from the left. A boundary that would cut through a mention is
/// moved back to the mention's start.
pub fn chunk_document(doc: &Document, chunk_len: usize) -> Result<Vec<Chunk>> {
    doc.validate()?;
    if chunk_len == 0 {
        return Err(Error::Invalid("chunk length must be >= 1".into()));
    }
    if let Some(m) = doc.mentions.iter().find(|m| m.end - m.start > chunk_len) {
        return Err(Error::Invalid(format!(
            "{}: mention [{}, {}) is longer than the chunk length {chunk_len}",
            doc.doc_id, m.start, m.end
        )));
    }
    let n = doc.tokens.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    let mut next_mention = 0;
    while start < n {
        let mut end = (start + chunk_len).min(n);
        if let Some(m) = doc.mentions.iter().find(|m| m.start < end && m.end > end) {
            end = m.start;
        }
        let mut mentions = Vec::new();
        while let Some(m) = doc.mentions.get(next_mention).filter(|m| m.end <= end) {
            mentions.push(Mention {
                start: m.start - start,
                end: m.end - start,
                entity_id: m.entity_id.clone(),
            });
            next_mention += 1;
        }
        chunks.push(Chunk {
            doc_id: doc.doc_id.clone(),
            offset: start,
            tokens: doc.tokens[start..end].to_vec(),
            mentions,
        });
        start = end;
    }
    Ok(chunks)
}

/// Keeps a uniform random subset of `cap` mentions (in document order) when
/// the chunk has more.
pub fn subsample_mentions(chunk: &Chunk, cap: usize, seed: u64) -> Chunk {
    let mut out = chunk.clone();
    let n = chunk.mentions.len();
    if n > cap.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut keep = sample(&mut rng, n, cap.max(1)).into_vec();
        keep.sort_unstable();
        out.mentions = keep.into_iter().map(|i| chunk.mentions[i].clone()).collect();
    }
    out
}
