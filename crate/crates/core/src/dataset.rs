//! Multi-turn interaction files and gold-label extraction.
//!
//! Accepted layout: a JSON array of
//! `{"database_id", "interaction": [{"utterance", "query"}], "interaction_id"?}`.
//! `db_id` is accepted in place of `database_id`; a missing id falls back to
//! the interaction's index.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::catalog::SchemaCatalog;
use crate::error::{Error, Result};
use crate::sql::{classify_difficulty, parse, referenced_schema, Difficulty, GoldLabels};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub question: String,
    pub sql: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub id: String,
    pub db_id: String,
    pub turns: Vec<Turn>,
}

/// One gold-labeled turn. `questions` holds every question up to and
/// including this one.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledTurn {
    pub db_id: String,
    pub interaction: String,
    /// 1-based.
    pub turn: usize,
    pub questions: Vec<String>,
    pub sql: String,
    pub labels: GoldLabels,
    /// Labels of the previous turn, when it was labeled.
    pub previous: Option<GoldLabels>,
    pub difficulty: Difficulty,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedTurn {
    pub db_id: String,
    pub interaction: String,
    pub turn: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub turns: Vec<LabeledTurn>,
    pub skipped: Vec<SkippedTurn>,
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn load_interactions(path: impl AsRef<Path>, catalogs: &[SchemaCatalog]) -> Result<Vec<Interaction>> {
    let path = path.as_ref();
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&raw)
        .map_err(|e| Error::format(path.display().to_string(), e))?;
    interactions_from_json(&value, catalogs)
}

pub fn interactions_from_json(value: &Value, catalogs: &[SchemaCatalog]) -> Result<Vec<Interaction>> {
    let entries = value
        .as_array()
        .ok_or_else(|| Error::format("interactions", "top level must be an array"))?;
    let mut out = Vec::with_capacity(entries.len());
    let mut unknown = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        let bad = |m: &str| Error::format(format!("interaction {i}"), m);
        let db_id = entry
            .get("database_id")
            .or_else(|| entry.get("db_id"))
            .and_then(Value::as_str)
            .ok_or_else(|| bad("missing database_id"))?;
        let id = match entry.get("interaction_id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => i.to_string(),
        };
        let raw_turns = entry
            .get("interaction")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing interaction array"))?;
        if raw_turns.is_empty() {
            return Err(bad("interaction has no turns"));
        }
        let mut turns = Vec::with_capacity(raw_turns.len());
        for t in raw_turns {
            let question = t
                .get("utterance")
                .and_then(Value::as_str)
                .ok_or_else(|| bad("turn without utterance"))?;
            let sql = t.get("query").and_then(Value::as_str).map(normalize_ws);
            turns.push(Turn {
                question: normalize_ws(question),
                sql,
            });
        }
        if !catalogs.iter().any(|c| c.db_id == db_id) && !unknown.contains(&db_id.to_string()) {
            unknown.push(db_id.to_string());
        }
        out.push(Interaction {
            id,
            db_id: db_id.to_string(),
            turns,
        });
    }
    if !unknown.is_empty() {
        return Err(Error::Validation(format!("unknown db_id: {}", unknown.join(", "))));
    }
    Ok(out)
}

/// Labels every turn from its gold SQL. Turns whose SQL is missing or does
/// not parse are reported in `skipped` instead of failing the whole set.
pub fn label_turns(interactions: &[Interaction], catalogs: &[SchemaCatalog]) -> Result<LabeledDataset> {
    let by_id: HashMap<&str, &SchemaCatalog> = catalogs.iter().map(|c| (c.db_id.as_str(), c)).collect();
    let mut out = LabeledDataset::default();
    for interaction in interactions {
        let catalog = by_id
            .get(interaction.db_id.as_str())
            .ok_or_else(|| Error::Validation(format!("unknown db_id: {}", interaction.db_id)))?;
        let mut previous: Option<GoldLabels> = None;
        let mut questions = Vec::new();
        for (i, turn) in interaction.turns.iter().enumerate() {
            questions.push(turn.question.clone());
            let skip = |reason: String| SkippedTurn {
                db_id: interaction.db_id.clone(),
                interaction: interaction.id.clone(),
                turn: i + 1,
                reason,
            };
            let Some(sql) = &turn.sql else {
                out.skipped.push(skip("no gold SQL".into()));
                previous = None;
                continue;
            };
            match parse(sql, catalog) {
                Ok(q) => {
                    let labels = referenced_schema(&q);
                    out.turns.push(LabeledTurn {
                        db_id: interaction.db_id.clone(),
                        interaction: interaction.id.clone(),
                        turn: i + 1,
                        questions: questions.clone(),
                        sql: sql.clone(),
                        labels: labels.clone(),
                        previous: previous.replace(labels),
                        difficulty: classify_difficulty(&q),
                    });
                }
                Err(e) => {
                    out.skipped.push(skip(e.to_string()));
                    previous = None;
                }
            }
        }
    }
    Ok(out)
}
