//! Word tokenisation and the fixed token vocabulary.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
pub const MASK: &str = "[MASK]";
const SPECIALS: [&str; 4] = [UNK, CLS, SEP, MASK];

/// Lowercases and splits on whitespace; punctuation becomes its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_whitespace() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
        } else if ch.is_ascii_punctuation() || (!ch.is_alphanumeric() && !ch.is_whitespace()) {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            out.push(ch.to_string());
        } else {
            cur.extend(ch.to_lowercase());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Key used by the alias index: lowercase with runs of whitespace collapsed.
pub fn normalize_surface(surface: &str) -> String {
    surface
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<String>", from = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Self::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Special tokens first, then every word seen at least `min_count` times,
    /// ordered by descending frequency then lexically.
    pub fn build<'a, I>(words: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for w in words {
            *counts.entry(w.to_lowercase()).or_default() += 1;
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count.max(1) && !SPECIALS.contains(&w.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(w, _)| w))
            .collect();
        Self::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, word: &str) -> u32 {
        match self.index.get(word) {
            Some(&i) => i,
            None => self.index.get(&word.to_lowercase()).copied().unwrap_or(0),
        }
    }

    pub fn unk(&self) -> u32 {
        self.id(UNK)
    }
    pub fn cls(&self) -> u32 {
        self.id(CLS)
    }
    pub fn sep(&self) -> u32 {
        self.id(SEP)
    }
    pub fn mask(&self) -> u32 {
        self.id(MASK)
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<u32> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("FIFA World-Cup, 2018!"),
            vec!["fifa", "world", "-", "cup", ",", "2018", "!"]
        );
        assert!(tokenize("   ").is_empty());
    }

    #[test]
    fn surface_normalisation() {
        assert_eq!(normalize_surface("  New\tYORK  city "), "new york city");
    }

    #[test]
    fn vocab_orders_by_frequency_and_maps_unknowns() {
        let v = Vocab::build(["b", "a", "b", "c", "A"], 1);
        assert_eq!(&v.tokens()[4..], &["a", "b", "c"]);
        assert_eq!(v.id("zzz"), v.unk());
        assert_eq!(v.id("B"), v.id("b"));
        let v2 = Vocab::build(["b", "a", "b", "c"], 2);
        assert_eq!(&v2.tokens()[4..], &["b"]);
    }

    #[test]
    fn vocab_survives_json() {
        let v = Vocab::build(["b", "a", "b"], 1);
        let back: Vocab = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("a"), v.id("a"));
    }
}
