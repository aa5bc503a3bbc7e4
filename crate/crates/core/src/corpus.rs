//! Documents with mention annotations, and JSONL helpers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::text::normalize_surface;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub start: usize,
    pub end: usize,
    pub entity_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub tokens: Vec<String>,
    #[serde(default)]
    pub mentions: Vec<Mention>,
}

impl Document {
    pub fn surface(&self, start: usize, end: usize) -> String {
        normalize_surface(&self.tokens[start..end].join(" "))
    }

    /// Checks that mentions are in bounds, non-empty, sorted and non-overlapping.
    pub fn validate(&self) -> Result<()> {
        let mut prev_end = 0;
        for m in &self.mentions {
            if m.start >= m.end || m.end > self.tokens.len() {
                return Err(Error::Validation(format!(
                    "doc `{}`: mention [{}, {}) out of bounds for {} tokens",
                    self.doc_id,
                    m.start,
                    m.end,
                    self.tokens.len()
                )));
            }
            if m.start < prev_end {
                return Err(Error::Validation(format!(
                    "doc `{}`: mentions overlap or are unsorted at [{}, {})",
                    self.doc_id, m.start, m.end
                )));
            }
            prev_end = m.end;
        }
        Ok(())
    }
}

/// Reads one JSON value per non-blank line, reporting the failing line number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: i + 1,
            source,
        })?;
        out.push(value);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| Error::Format(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>> {
    let docs: Vec<Document> = read_jsonl(path)?;
    for d in &docs {
        d.validate()?;
    }
    Ok(docs)
}
