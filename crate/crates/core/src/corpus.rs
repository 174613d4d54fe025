//! Single-turn fine-tuning examples built from the extracted schema and the
//! selected base SQL.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::SchemaCatalog;
use crate::error::{Error, Result};
use crate::sql::{parse, render};
use crate::template::{fill, FINETUNE_INPUT, FINETUNE_TARGET};

/// End-of-sequence marker appended to every target.
pub const DEFAULT_TERMINATOR: &str = "< | end_of_sentence | >";

/// `Q1 & Q2 & … & Qm`.
pub fn concat_questions(questions: &[String]) -> Result<String> {
    if questions.is_empty() {
        return Err(Error::Validation("no questions to concatenate".into()));
    }
    Ok(questions.join(" & "))
}

/// One line of the corpus.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneExample {
    pub input: String,
    pub target: String,
    pub db_id: String,
    pub interaction: String,
    pub turn: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExampleMeta {
    pub db_id: String,
    pub interaction: String,
    pub turn: usize,
}

pub fn render_input(questions: &[String], schema: &str, base_sql: &str) -> Result<String> {
    let q = concat_questions(questions)?;
    fill(
        FINETUNE_INPUT,
        &[("sql_base", base_sql), ("schema", schema), ("questions", &q)],
    )
}

/// Fenced `sql ;` followed by the terminator. `sql` is used as given.
pub fn render_target(sql: &str, terminator: &str) -> Result<String> {
    fill(FINETUNE_TARGET, &[("sql", sql), ("terminator", terminator)])
}

/// Renders one example. The target SQL is normalized by the canonical
/// printer and must parse against `catalog`.
pub fn build_example(
    questions: &[String],
    extracted_text: &str,
    base_sql: &str,
    target_sql: &str,
    catalog: &SchemaCatalog,
    meta: ExampleMeta,
    terminator: &str,
) -> Result<FineTuneExample> {
    let q = parse(target_sql, catalog).map_err(|e| {
        Error::Validation(format!(
            "target SQL of {}/{} turn {} does not parse: {e}",
            meta.db_id, meta.interaction, meta.turn
        ))
    })?;
    Ok(FineTuneExample {
        input: render_input(questions, extracted_text, base_sql)?,
        target: render_target(&render(&q, catalog), terminator)?,
        db_id: meta.db_id,
        interaction: meta.interaction,
        turn: meta.turn,
    })
}

pub fn corpus_to_jsonl(examples: &[FineTuneExample]) -> String {
    examples
        .iter()
        .map(|e| serde_json::to_string(e).expect("example serializes") + "\n")
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub total: usize,
    pub by_difficulty: BTreeMap<String, usize>,
}

/// Writes the examples as JSON lines and counts them by difficulty.
/// `difficulties` runs parallel to `examples`.
pub fn write_corpus(
    path: impl AsRef<Path>,
    examples: &[FineTuneExample],
    difficulties: &[&str],
) -> Result<CorpusSummary> {
    let path = path.as_ref();
    if difficulties.len() != examples.len() {
        return Err(Error::Validation("one difficulty per example is required".into()));
    }
    std::fs::write(path, corpus_to_jsonl(examples)).map_err(|e| Error::io(path, e))?;
    let mut summary = CorpusSummary {
        total: examples.len(),
        ..Default::default()
    };
    for d in difficulties {
        *summary.by_difficulty.entry(d.to_string()).or_default() += 1;
    }
    Ok(summary)
}
