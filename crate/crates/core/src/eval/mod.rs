//! Linking metrics with strong span matching, and encoder-pass accounting
//! for the inference regimes.

mod bench;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::kb::KbStore;
use crate::pipeline::{LinkedDocument, LinkedMention};

pub use bench::{benchmark, PassAccounting, Regime};

/// Metrics over the gold mentions whose entity is in the knowledge base.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    /// Correct links over gold mentions whose exact span was predicted.
    pub ed_accuracy: f64,
    /// Gold mentions whose entity is among the predicted span's candidates.
    pub candidate_recall: f64,
    /// `None` when the split has no gold mentions.
    pub seen_accuracy: Option<f64>,
    pub unseen_accuracy: Option<f64>,
    pub gold_mentions: usize,
    pub predicted_mentions: usize,
    pub matches: usize,
    pub seen_mentions: usize,
    pub unseen_mentions: usize,
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Default)]
struct Tally {
    gold: usize,
    predicted: usize,
    matches: usize,
    aligned: usize,
    recalled: usize,
    seen: [usize; 2],
    seen_correct: [usize; 2],
}

impl Tally {
    /// Counts one document. `seen` splits gold mentions when given.
    fn add(&mut self, gold: &Document, pred: &[LinkedMention], store: &KbStore, seen: Option<&BTreeSet<String>>) {
        let spans: HashMap<(usize, usize), &LinkedMention> =
            pred.iter().map(|m| ((m.start, m.end), m)).collect();
        // Spans whose gold is NIL or outside the KB are neither gold nor
        // predicted mentions.
        let excluded: BTreeSet<(usize, usize)> = gold
            .mentions
            .iter()
            .filter(|m| !m.entity_id.as_deref().is_some_and(|id| store.contains(id)))
            .map(|m| (m.start, m.end))
            .collect();
        self.predicted += pred
            .iter()
            .filter(|m| m.entity_id.is_some() && !excluded.contains(&(m.start, m.end)))
            .count();
        for m in &gold.mentions {
            let Some(id) = m.entity_id.as_deref().filter(|id| store.contains(id)) else {
                continue;
            };
            self.gold += 1;
            let p = spans.get(&(m.start, m.end));
            let correct = p.is_some_and(|p| p.entity_id.as_deref() == Some(id));
            if let Some(p) = p {
                self.aligned += 1;
                if p.candidates.iter().any(|c| c.entity_id == id) {
                    self.recalled += 1;
                }
            }
            self.matches += usize::from(correct);
            if let Some(seen) = seen {
                let k = usize::from(seen.contains(id));
                self.seen[k] += 1;
                self.seen_correct[k] += usize::from(correct);
            }
        }
    }

    fn report(&self, split: bool) -> EvalReport {
        let p = rate(self.matches, self.predicted);
        let r = rate(self.matches, self.gold);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        let acc = |k: usize| (split && self.seen[k] > 0).then(|| rate(self.seen_correct[k], self.seen[k]));
        EvalReport {
            micro_precision: p,
            micro_recall: r,
            micro_f1: f1,
            ed_accuracy: rate(self.matches, self.aligned),
            candidate_recall: rate(self.recalled, self.gold),
            seen_accuracy: acc(1),
            unseen_accuracy: acc(0),
            gold_mentions: self.gold,
            predicted_mentions: self.predicted,
            matches: self.matches,
            seen_mentions: self.seen[1],
            unseen_mentions: self.seen[0],
        }
    }
}

/// InKB micro P/R/F1 with strong matching: a prediction is a true positive
/// iff its span equals a gold span and its entity equals the gold entity.
/// NIL predictions are not predicted mentions.
pub fn evaluate_el(predictions: &[LinkedDocument], gold: &[Document], store: &KbStore) -> Result<EvalReport> {
    let by_id: HashMap<&str, &Document> = gold.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let mut preds: HashMap<&str, &[LinkedMention]> = HashMap::new();
    for p in predictions {
        if !by_id.contains_key(p.doc_id.as_str()) {
            return Err(Error::Validation(format!("prediction for unknown doc id `{}`", p.doc_id)));
        }
        preds.insert(&p.doc_id, &p.mentions);
    }
    let mut tally = Tally::default();
    for d in gold {
        tally.add(d, preds.get(d.doc_id.as_str()).copied().unwrap_or(&[]), store, None);
    }
    Ok(tally.report(false))
}

/// Disambiguation accuracy over gold spans, overall and split by whether
/// the gold entity is in `seen_ids`. Documents without predictions count as
/// all wrong; predictions for unknown documents are ignored.
pub fn evaluate_ed(
    predictions: &[LinkedDocument],
    gold: &[Document],
    store: &KbStore,
    seen_ids: &BTreeSet<String>,
) -> EvalReport {
    let preds: HashMap<&str, &[LinkedMention]> =
        predictions.iter().map(|p| (p.doc_id.as_str(), p.mentions.as_slice())).collect();
    let mut tally = Tally::default();
    for d in gold {
        tally.add(d, preds.get(d.doc_id.as_str()).copied().unwrap_or(&[]), store, Some(seen_ids));
    }
    let mut report = tally.report(true);
    report.ed_accuracy = rate(tally.matches, tally.gold);
    report
}
