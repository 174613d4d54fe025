//! Dialogue history and base-SQL selection.
//!
//! Each earlier turn `h` in the sliding window is scored against the current
//! turn `m` by `R = S + 1 − P`, where `S` is question similarity and `P` is
//! the normalized Jensen–Shannon divergence between the two turns' schema
//! probability distributions. The highest-scoring turn with a valid SQL
//! supplies the base SQL.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::catalog::SchemaCatalog;
use crate::embedding::{cosine, EmbeddingProvider, HashEmbedder};
use crate::error::{Error, Result};
use crate::sese::SchemaProbabilities;
use crate::sql::is_valid_sql;

pub const DEFAULT_WINDOW: usize = 5;

/// Added to every entry before normalizing, so no entry is zero.
pub const SMOOTHING: f64 = 1e-9;

/// Fixed-capacity FIFO of turn indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    capacity: usize,
    units: VecDeque<usize>,
}

impl ContextWindow {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("context window capacity must be positive".into()));
        }
        Ok(Self {
            capacity,
            units: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Appends `turn`, dropping the oldest unit when full.
    pub fn slide(&mut self, turn: usize) -> Result<()> {
        if let Some(&last) = self.units.back() {
            if turn <= last {
                return Err(Error::Validation(format!(
                    "turn {turn} is not after the latest window turn {last}"
                )));
            }
        }
        if self.units.len() == self.capacity {
            self.units.pop_front();
        }
        self.units.push_back(turn);
        Ok(())
    }

    /// Oldest first.
    pub fn turns(&self) -> impl Iterator<Item = usize> + '_ {
        self.units.iter().copied()
    }

    pub fn contains(&self, turn: usize) -> bool {
        self.units.contains(&turn)
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }
}

fn check_next(last: Option<usize>, turn: usize, store: &str) -> Result<()> {
    match last {
        Some(l) if turn <= l => Err(Error::Validation(format!(
            "{store}: turn {turn} must follow turn {l}"
        ))),
        _ => Ok(()),
    }
}

/// Raw schema probabilities per turn, append-only.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HistorySchemaStore {
    entries: Vec<(usize, SchemaProbabilities)>,
}

impl HistorySchemaStore {
    pub fn record(&mut self, turn: usize, probs: SchemaProbabilities) -> Result<()> {
        check_next(self.entries.last().map(|e| e.0), turn, "schema store")?;
        self.entries.push((turn, probs));
        Ok(())
    }

    pub fn get(&self, turn: usize) -> Option<&SchemaProbabilities> {
        self.entries.iter().find(|e| e.0 == turn).map(|e| &e.1)
    }

    pub fn entries(&self) -> &[(usize, SchemaProbabilities)] {
        &self.entries
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaEntry {
    pub turn: usize,
    pub question: String,
    pub sql: String,
    pub valid: bool,
}

/// Questions and SQLs per turn, append-only. Validity is fixed when a turn
/// is recorded.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryQaStore {
    entries: Vec<QaEntry>,
}

impl HistoryQaStore {
    /// Records a turn, checking its SQL against `catalog`.
    pub fn record(&mut self, turn: usize, question: &str, sql: &str, catalog: &SchemaCatalog) -> Result<()> {
        let valid = is_valid_sql(sql, catalog);
        self.record_entry(QaEntry {
            turn,
            question: question.to_string(),
            sql: sql.to_string(),
            valid,
        })
    }

    pub fn record_entry(&mut self, entry: QaEntry) -> Result<()> {
        check_next(self.entries.last().map(|e| e.turn), entry.turn, "question/SQL store")?;
        self.entries.push(entry);
        Ok(())
    }

    pub fn get(&self, turn: usize) -> Option<&QaEntry> {
        self.entries.iter().find(|e| e.turn == turn)
    }

    pub fn entries(&self) -> &[QaEntry] {
        &self.entries
    }
}

/// Symmetric question similarity in `[0, 1]`.
pub trait SimilarityProvider: Send + Sync {
    fn score(&self, a: &str, b: &str) -> Result<f64>;
}

/// `max(0, cosine)` of two embeddings.
pub struct EmbeddingSimilarity<P> {
    provider: P,
}

impl<P: EmbeddingProvider> EmbeddingSimilarity<P> {
    pub fn new(provider: P) -> Self {
        Self { provider }
    }
}

impl Default for EmbeddingSimilarity<HashEmbedder> {
    fn default() -> Self {
        Self::new(HashEmbedder::new(256, 0))
    }
}

impl<P: EmbeddingProvider> SimilarityProvider for EmbeddingSimilarity<P> {
    fn score(&self, a: &str, b: &str) -> Result<f64> {
        if a == b {
            return Ok(1.0);
        }
        let s = cosine(&self.provider.embed(a)?, &self.provider.embed(b)?);
        Ok(s.max(0.0))
    }
}

/// Table probabilities then column probabilities in catalog order, each
/// plus [`SMOOTHING`], divided by their sum. Stars are left out.
pub fn normalize_probs(probs: &SchemaProbabilities) -> Vec<f64> {
    let raw: Vec<f64> = probs
        .tables
        .iter()
        .chain(probs.columns.iter().flatten())
        .map(|p| p + SMOOTHING)
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|p| p / total).collect()
}

fn kl_to_mean(a: &[f64], m: &[f64]) -> f64 {
    a.iter()
        .zip(m)
        .filter(|(x, _)| **x > 0.0)
        .map(|(x, y)| x * (x / y).ln())
        .sum()
}

/// `(KL(p‖m) + KL(q‖m)) / (2 ln 2)` with `m = (p + q) / 2`, in `[0, 1]`.
/// Zero entries contribute nothing.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::Validation(format!(
            "distributions of lengths {} and {} cannot be compared",
            p.len(),
            q.len()
        )));
    }
    for d in [p, q] {
        if d.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Validation("distribution has a negative or non-finite entry".into()));
        }
        let s: f64 = d.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("distribution sums to {s}, not 1")));
        }
    }
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = (kl_to_mean(p, &m) + kl_to_mean(q, &m)) / (2.0 * std::f64::consts::LN_2);
    Ok(js.clamp(0.0, 1.0))
}

/// `S + 1 − P`.
pub fn relevance(similarity: f64, divergence: f64) -> Result<f64> {
    for (name, v) in [("similarity", similarity), ("divergence", divergence)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Validation(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok(similarity + 1.0 - divergence)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseSelection {
    pub turn: usize,
    pub sql: String,
    pub score: f64,
}

/// Highest-relevance earlier turn in the window with a valid SQL; ties go
/// to the most recent turn. `None` when there is no candidate.
/// The current turn's probabilities must already be in `schema_store`.
pub fn select_base_sql(
    schema_store: &HistorySchemaStore,
    qa_store: &HistoryQaStore,
    window: &ContextWindow,
    m: usize,
    question: &str,
    similarity: &dyn SimilarityProvider,
) -> Result<Option<BaseSelection>> {
    if m == 0 {
        return Err(Error::Validation("turns are numbered from 1".into()));
    }
    let candidates: Vec<&QaEntry> = window
        .turns()
        .filter(|&h| h < m)
        .filter_map(|h| qa_store.get(h))
        .filter(|e| e.valid)
        .collect();
    if candidates.is_empty() {
        return Ok(None);
    }
    let current = normalize_probs(schema_store.get(m).ok_or_else(|| {
        Error::Validation(format!("no schema probabilities recorded for turn {m}"))
    })?);
    let mut best: Option<BaseSelection> = None;
    for e in candidates {
        let past = schema_store.get(e.turn).ok_or_else(|| {
            Error::Validation(format!("no schema probabilities recorded for turn {}", e.turn))
        })?;
        let s = similarity.score(question, &e.question)?;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Validation(format!("similarity provider returned {s}")));
        }
        let score = relevance(s, js_divergence(&current, &normalize_probs(past))?)?;
        // candidates come oldest first, so `>=` lets a later tie win
        if best.as_ref().is_none_or(|b| score >= b.score) {
            best = Some(BaseSelection {
                turn: e.turn,
                sql: e.sql.clone(),
                score,
            });
        }
    }
    Ok(best)
}

/// One line of a persisted interaction history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub turn: usize,
    pub question: String,
    pub sql: String,
    pub valid: bool,
    pub probs: SchemaProbabilities,
}

/// JSON lines, one per turn present in both stores.
pub fn history_to_jsonl(schema: &HistorySchemaStore, qa: &HistoryQaStore) -> String {
    qa.entries()
        .iter()
        .filter_map(|e| {
            schema.get(e.turn).map(|p| HistoryRecord {
                turn: e.turn,
                question: e.question.clone(),
                sql: e.sql.clone(),
                valid: e.valid,
                probs: p.clone(),
            })
        })
        .map(|r| serde_json::to_string(&r).expect("record serializes") + "\n")
        .collect()
}

pub fn history_from_jsonl(text: &str) -> Result<(HistorySchemaStore, HistoryQaStore)> {
    let mut schema = HistorySchemaStore::default();
    let mut qa = HistoryQaStore::default();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let r: HistoryRecord =
            serde_json::from_str(line).map_err(|e| Error::format(format!("history line {}", i + 1), e))?;
        schema.record(r.turn, r.probs)?;
        qa.record_entry(QaEntry {
            turn: r.turn,
            question: r.question,
            sql: r.sql,
            valid: r.valid,
        })?;
    }
    Ok((schema, qa))
}
