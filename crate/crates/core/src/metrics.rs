//! Redundancy scores of extracted schemas, exact match, interaction-level
//! aggregation and execution match.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::SchemaCatalog;
use crate::error::{Error, Result};
use crate::extraction::ExtractedSchema;
use crate::sql::{canonical_components, parse, GoldLabels};

/// 0 when the sets are equal, the redundant share `|V̂ − V| / |V̂|` when
/// `V ⊂ V̂`, and 1 when anything gold is missing.
pub fn sample_score(gold: &BTreeSet<usize>, extracted: &BTreeSet<usize>) -> f64 {
    if gold == extracted {
        0.0
    } else if gold.is_subset(extracted) {
        (extracted.len() - gold.len()) as f64 / extracted.len() as f64
    } else {
        1.0
    }
}

/// Gold and extracted tables of one sample, with columns grouped by table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancySample {
    pub gold_tables: BTreeSet<usize>,
    pub extracted_tables: BTreeSet<usize>,
    pub gold_columns: BTreeMap<usize, BTreeSet<usize>>,
    pub extracted_columns: BTreeMap<usize, BTreeSet<usize>>,
}

impl RedundancySample {
    pub fn new(gold: &GoldLabels, extracted: &ExtractedSchema) -> Self {
        let mut s = RedundancySample {
            gold_tables: gold.tables.clone(),
            extracted_tables: extracted.table_ids().collect(),
            ..Default::default()
        };
        for c in &gold.columns {
            s.gold_columns.entry(c.table).or_default().insert(c.column);
        }
        for c in extracted.column_ids() {
            s.extracted_columns.entry(c.table).or_default().insert(c.column);
        }
        s
    }

    pub fn table_score(&self) -> f64 {
        sample_score(&self.gold_tables, &self.extracted_tables)
    }

    /// One score per gold table, in table order.
    pub fn column_scores(&self) -> Vec<f64> {
        let empty = BTreeSet::new();
        self.gold_tables
            .iter()
            .map(|t| {
                sample_score(
                    self.gold_columns.get(t).unwrap_or(&empty),
                    self.extracted_columns.get(t).unwrap_or(&empty),
                )
            })
            .collect()
    }
}

fn non_empty(samples: &[RedundancySample]) -> Result<()> {
    if samples.is_empty() {
        Err(Error::Validation("no samples to score".into()))
    } else {
        Ok(())
    }
}

/// `100 · mean` of the per-sample table scores.
pub fn trs(samples: &[RedundancySample]) -> Result<f64> {
    non_empty(samples)?;
    let total: f64 = samples.iter().map(RedundancySample::table_score).sum();
    Ok(100.0 * total / samples.len() as f64)
}

/// `100 · Σ_j Σ_i score_ij / Σ_j N_j`, with `N_j` the number of gold tables
/// of sample `j`.
pub fn crs(samples: &[RedundancySample]) -> Result<f64> {
    non_empty(samples)?;
    let (mut sum, mut n) = (0.0, 0usize);
    for s in samples {
        let scores = s.column_scores();
        n += scores.len();
        sum += scores.iter().sum::<f64>();
    }
    if n == 0 {
        return Err(Error::Validation("samples have no gold tables".into()));
    }
    Ok(100.0 * sum / n as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyReport {
    pub s: f64,
    pub trs: f64,
    pub crs: f64,
    pub table_scores: Vec<f64>,
    pub column_scores: Vec<Vec<f64>>,
}

pub fn redundancy_report(samples: &[RedundancySample], s: f64) -> Result<RedundancyReport> {
    Ok(RedundancyReport {
        s,
        trs: trs(samples)?,
        crs: crs(samples)?,
        table_scores: samples.iter().map(RedundancySample::table_score).collect(),
        column_scores: samples.iter().map(RedundancySample::column_scores).collect(),
    })
}

/// Component-wise structural equality with literal values masked. A
/// prediction that does not parse never matches.
pub fn exact_match(pred: &str, gold: &str, catalog: &SchemaCatalog) -> bool {
    match (parse(pred, catalog), parse(gold, catalog)) {
        (Ok(p), Ok(g)) => canonical_components(&p, catalog) == canonical_components(&g, catalog),
        _ => false,
    }
}

/// Outcome of one turn. `ex` is `None` when no executor was available.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnMatch {
    pub interaction: String,
    pub turn: usize,
    pub em: bool,
    pub ex: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionMatch {
    pub interaction: String,
    pub turns: usize,
    pub em_correct: usize,
    pub ex_correct: Option<usize>,
}

/// Question-level and interaction-level match rates. Execution rates are
/// `None` ("n/a") unless every turn was executed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub qm_em: f64,
    pub im_em: f64,
    pub qm_ex: Option<f64>,
    pub im_ex: Option<f64>,
    pub interactions: Vec<InteractionMatch>,
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", 100.0 * v))
}

impl MatchReport {
    /// Human-readable summary table.
    pub fn to_table(&self) -> String {
        format!(
            "metric  QM      IM\nEM      {}  {}\nEX      {}  {}\n",
            fmt_rate(Some(self.qm_em)),
            fmt_rate(Some(self.im_em)),
            fmt_rate(self.qm_ex),
            fmt_rate(self.im_ex)
        )
    }
}

/// Groups turns by interaction in order of first appearance.
pub fn aggregate(matches: &[TurnMatch]) -> Result<MatchReport> {
    if matches.is_empty() {
        return Err(Error::Validation("no turns to aggregate".into()));
    }
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<&TurnMatch>> = BTreeMap::new();
    for m in matches {
        if !groups.contains_key(m.interaction.as_str()) {
            order.push(&m.interaction);
        }
        groups.entry(&m.interaction).or_default().push(m);
    }
    let executed = matches.iter().all(|m| m.ex.is_some());
    let interactions: Vec<InteractionMatch> = order
        .iter()
        .map(|id| {
            let turns = &groups[id];
            InteractionMatch {
                interaction: id.to_string(),
                turns: turns.len(),
                em_correct: turns.iter().filter(|m| m.em).count(),
                ex_correct: executed.then(|| turns.iter().filter(|m| m.ex == Some(true)).count()),
            }
        })
        .collect();
    let n = matches.len() as f64;
    let k = interactions.len() as f64;
    let qm_em = matches.iter().filter(|m| m.em).count() as f64 / n;
    let im_em = interactions.iter().filter(|i| i.em_correct == i.turns).count() as f64 / k;
    let (qm_ex, im_ex) = if executed {
        (
            Some(matches.iter().filter(|m| m.ex == Some(true)).count() as f64 / n),
            Some(interactions.iter().filter(|i| i.ex_correct == Some(i.turns)).count() as f64 / k),
        )
    } else {
        (None, None)
    };
    Ok(MatchReport {
        qm_em,
        im_em,
        qm_ex,
        im_ex,
        interactions,
    })
}

/// Rows of a query result, each value rendered as text (`NULL` for null).
pub type Rows = Vec<Vec<String>>;

/// Runs SQL against a database identified by `db_id`.
pub trait QueryExecutor: Send + Sync {
    fn run(&self, db_id: &str, sql: &str) -> Result<Rows>;
}

/// SQLite files laid out as `<root>/<db_id>/<db_id>.sqlite`, opened read-only.
pub struct SqliteExecutor {
    root: PathBuf,
}

impl SqliteExecutor {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn database_path(&self, db_id: &str) -> PathBuf {
        self.root.join(db_id).join(format!("{db_id}.sqlite"))
    }
}

fn render_value(v: rusqlite::types::ValueRef<'_>) -> String {
    use rusqlite::types::ValueRef;
    match v {
        ValueRef::Null => "NULL".into(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(f) => {
            if f.fract() == 0.0 && f.abs() < 1e15 {
                format!("{}", f as i64)
            } else {
                format!("{f}")
            }
        }
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
        ValueRef::Blob(b) => hex::encode(b),
    }
}

impl QueryExecutor for SqliteExecutor {
    fn run(&self, db_id: &str, sql: &str) -> Result<Rows> {
        let path = self.database_path(db_id);
        let db_err = |e: rusqlite::Error| Error::Database {
            path: path.clone(),
            message: e.to_string(),
        };
        if !Path::new(&path).exists() {
            return Err(Error::Database {
                path: path.clone(),
                message: "database file not found".into(),
            });
        }
        let conn = rusqlite::Connection::open_with_flags(&path, rusqlite::OpenFlags::SQLITE_OPEN_READ_ONLY)
            .map_err(db_err)?;
        let mut stmt = conn.prepare(sql).map_err(db_err)?;
        let n = stmt.column_count();
        let mut rows = stmt.query([]).map_err(db_err)?;
        let mut out = Vec::new();
        while let Some(row) = rows.next().map_err(db_err)? {
            let mut r = Vec::with_capacity(n);
            for i in 0..n {
                r.push(render_value(row.get_ref(i).map_err(db_err)?));
            }
            out.push(r);
        }
        Ok(out)
    }
}

/// Both queries run and return the same rows. Row order counts only when
/// the gold query has a top-level `ORDER BY`; otherwise rows compare as
/// multisets. Any execution error on the prediction is a mismatch.
pub fn execution_match(
    executor: &dyn QueryExecutor,
    catalog: &SchemaCatalog,
    pred: &str,
    gold: &str,
) -> Result<bool> {
    let ordered = parse(gold, catalog).map(|q| !q.order_by.is_empty()).unwrap_or(false);
    let gold_rows = executor.run(&catalog.db_id, gold)?;
    let Ok(mut pred_rows) = executor.run(&catalog.db_id, pred) else {
        return Ok(false);
    };
    if ordered {
        return Ok(pred_rows == gold_rows);
    }
    let mut gold_rows = gold_rows;
    gold_rows.sort();
    pred_rows.sort();
    Ok(pred_rows == gold_rows)
}
