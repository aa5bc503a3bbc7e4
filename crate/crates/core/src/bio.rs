//! BIO tags for mention detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bio {
    B,
    I,
    O,
}

impl Bio {
    pub const ALL: [Bio; 3] = [Bio::B, Bio::I, Bio::O];

    /// Class index used by the detection head.
    pub fn index(self) -> usize {
        match self {
            Bio::B => 0,
            Bio::I => 1,
            Bio::O => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Bio> {
        Self::ALL.get(i).copied()
    }
}

/// Tags `len` tokens from sorted, non-overlapping `[start, end)` spans.
pub fn encode_bio(len: usize, spans: &[(usize, usize)]) -> Result<Vec<Bio>> {
    let mut tags = vec![Bio::O; len];
    let mut prev_end = 0;
    for &(start, end) in spans {
        if start >= end || end > len || start < prev_end {
            return Err(Error::Invalid(format!(
                "span [{start}, {end}) is empty, out of bounds or overlapping"
            )));
        }
        tags[start] = Bio::B;
        tags[start + 1..end].iter_mut().for_each(|t| *t = Bio::I);
        prev_end = end;
    }
    Ok(tags)
}

/// Maximal spans of a tag sequence. An `I` with no open span starts one.
pub fn decode_bio(tags: &[Bio]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Bio::B => {
                if let Some(s) = open.replace(i) {
                    spans.push((s, i));
                }
            }
            Bio::I => {
                open.get_or_insert(i);
            }
            Bio::O => {
                if let Some(s) = open.take() {
                    spans.push((s, i));
                }
            }
        }
    }
    if let Some(s) = open {
        spans.push((s, tags.len()));
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use Bio::*;

    #[test]
    fn decodes_examples() {
        assert_eq!(decode_bio(&[B, I, O, B]), vec![(0, 2), (3, 4)]);
        assert_eq!(decode_bio(&[O, O, O]), vec![]);
        assert_eq!(decode_bio(&[I, I, O]), vec![(0, 2)]);
        assert_eq!(decode_bio(&[B, B, I]), vec![(0, 1), (1, 3)]);
    }

    #[test]
    fn encodes_spans() {
        assert_eq!(encode_bio(5, &[(1, 3)]).unwrap(), vec![O, B, I, O, O]);
        assert!(encode_bio(5, &[(1, 3), (2, 4)]).is_err());
        assert!(encode_bio(2, &[(1, 3)]).is_err());
    }
}
