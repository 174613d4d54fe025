use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{item_probability, TrainItem, TurnExample};
use super::params::{ExtractorParams, HeadKind};
use super::TrainConfig;
use crate::catalog::{ColumnId, SchemaCatalog};
use crate::embedding::{tokenize, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::extraction::ExtractedSchema;
use crate::sql::GoldLabels;

/// Marker prepended to items extracted in the previous turn.
pub const SN_MARKER: &str = "[SN]";

/// Per-table, per-column and per-table-star probabilities for one turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemaProbabilities {
    pub tables: Vec<f64>,
    /// `columns[t][c]` for column `c` of table `t`.
    pub columns: Vec<Vec<f64>>,
    pub stars: Vec<f64>,
}

impl SchemaProbabilities {
    /// Every entry set to `value`.
    pub fn filled(catalog: &SchemaCatalog, value: f64) -> Self {
        Self {
            tables: vec![value; catalog.tables.len()],
            columns: catalog
                .tables
                .iter()
                .map(|t| vec![value; t.columns.len()])
                .collect(),
            stars: vec![value; catalog.tables.len()],
        }
    }

    pub fn column(&self, id: ColumnId) -> f64 {
        self.columns[id.table][id.column]
    }

    /// Shape matches `catalog` and every entry lies in `[0, 1]`.
    pub fn validate(&self, catalog: &SchemaCatalog) -> Result<()> {
        let n = catalog.tables.len();
        let shape_ok = self.tables.len() == n
            && self.stars.len() == n
            && self.columns.len() == n
            && self
                .columns
                .iter()
                .zip(&catalog.tables)
                .all(|(c, t)| c.len() == t.columns.len());
        if !shape_ok {
            return Err(Error::Validation(format!(
                "probabilities do not match the shape of catalog `{}`",
                catalog.db_id
            )));
        }
        let all = self.tables.iter().chain(&self.stars).chain(self.columns.iter().flatten());
        for p in all {
            if !(0.0..=1.0).contains(p) {
                return Err(Error::Validation(format!("probability {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Columns carried over from the previous turn. Only columns are marked;
/// tables and stars are not.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marks {
    pub columns: BTreeSet<ColumnId>,
}

impl From<&ExtractedSchema> for Marks {
    fn from(x: &ExtractedSchema) -> Self {
        Marks {
            columns: x.column_ids().collect(),
        }
    }
}

impl From<&GoldLabels> for Marks {
    fn from(g: &GoldLabels) -> Self {
        Marks {
            columns: g.columns.clone(),
        }
    }
}

/// Questions joined by ` & `.
pub fn question_context(questions: &[String]) -> String {
    questions.join(" & ")
}

fn marker(marked: bool) -> String {
    if marked {
        format!(" {SN_MARKER}")
    } else {
        String::new()
    }
}

pub fn table_text(ctx: &str, table: &str) -> String {
    format!("{ctx} | {table}")
}

pub fn column_text(ctx: &str, marked: bool, table: &str, column: &str) -> String {
    format!("{ctx} |{} {table} . {column}", marker(marked))
}

pub fn star_text(ctx: &str, table: &str) -> String {
    format!("{ctx} | {table} . all columns")
}

/// Annotation text of a table, falling back to its name.
pub fn table_annotation(catalog: &SchemaCatalog, t: usize) -> &str {
    let table = &catalog.tables[t];
    table.annotation.as_deref().unwrap_or(&table.name)
}

/// Annotation text of a column, falling back to its name.
pub fn column_annotation(catalog: &SchemaCatalog, id: ColumnId) -> &str {
    let column = catalog.column(id);
    column.annotation.as_deref().unwrap_or(&column.name)
}

/// Memoizing wrapper; the same text is embedded once.
pub struct EmbedCache<'a> {
    provider: &'a dyn EmbeddingProvider,
    map: HashMap<String, Vec<f64>>,
}

impl<'a> EmbedCache<'a> {
    pub fn new(provider: &'a dyn EmbeddingProvider) -> Self {
        Self {
            provider,
            map: HashMap::new(),
        }
    }

    pub fn get(&mut self, text: &str) -> Result<Vec<f64>> {
        if let Some(v) = self.map.get(text) {
            return Ok(v.clone());
        }
        let v = self.provider.embed(text)?;
        if v.len() != self.provider.dim() {
            return Err(Error::Validation(format!(
                "provider {} returned width {}, expected {}",
                self.provider.id(),
                v.len(),
                self.provider.dim()
            )));
        }
        self.map.insert(text.to_string(), v.clone());
        Ok(v)
    }
}

/// Builds the gate inputs for a subset of a catalog's items.
pub(crate) struct ItemBuilder<'c, 'e, 'p> {
    pub catalog: &'c SchemaCatalog,
    pub ctx: String,
    pub marks: &'c Marks,
    pub cache: &'e mut EmbedCache<'p>,
    pub table_residual: bool,
}

impl ItemBuilder<'_, '_, '_> {
    pub fn table(&mut self, t: usize, label: bool) -> Result<TrainItem> {
        let name = &self.catalog.tables[t].name;
        Ok(TrainItem {
            e: self.cache.get(&table_text(&self.ctx, name))?,
            e_hat: self.cache.get(table_annotation(self.catalog, t))?,
            residual: None,
            label,
        })
    }

    pub fn column(&mut self, id: ColumnId, label: bool) -> Result<TrainItem> {
        self.foreign_column(self.catalog, id, self.marks.columns.contains(&id), label)
    }

    /// A column of any catalog, embedded in this turn's question context.
    pub fn foreign_column(
        &mut self,
        catalog: &SchemaCatalog,
        id: ColumnId,
        marked: bool,
        label: bool,
    ) -> Result<TrainItem> {
        let table = &catalog.tables[id.table].name;
        let column = &catalog.column(id).name;
        let residual = if self.table_residual {
            Some(self.cache.get(&table_text(&self.ctx, table))?)
        } else {
            None
        };
        Ok(TrainItem {
            e: self.cache.get(&column_text(&self.ctx, marked, table, column))?,
            e_hat: self.cache.get(column_annotation(catalog, id))?,
            residual,
            label,
        })
    }

    pub fn star(&mut self, t: usize, label: bool) -> Result<TrainItem> {
        let name = &self.catalog.tables[t].name;
        Ok(TrainItem {
            e: self.cache.get(&star_text(&self.ctx, name))?,
            e_hat: self.cache.get(table_annotation(self.catalog, t))?,
            residual: None,
            label,
        })
    }

    /// Every table, column and star of the catalog, labeled from `gold`.
    pub fn full_turn(&mut self, gold: Option<&GoldLabels>) -> Result<TurnExample> {
        let empty = GoldLabels::default();
        let gold = gold.unwrap_or(&empty);
        let mut turn = TurnExample::default();
        for t in 0..self.catalog.tables.len() {
            turn.tables.push(self.table(t, gold.tables.contains(&t))?);
            turn.stars.push(self.star(t, gold.star_tables.contains(&t))?);
        }
        for id in self.catalog.column_ids() {
            turn.columns.push(self.column(id, gold.columns.contains(&id))?);
        }
        Ok(turn)
    }
}

/// Token cost of a table header inside a segment: name, annotation and a separator.
pub fn table_header_tokens(catalog: &SchemaCatalog, t: usize) -> usize {
    let table = &catalog.tables[t];
    tokenize(&table.name).len() + table.annotation.as_deref().map_or(0, |a| tokenize(a).len()) + 1
}

/// Token cost of one column inside a segment: name, annotation and a separator.
pub fn column_tokens(catalog: &SchemaCatalog, id: ColumnId) -> usize {
    let column = catalog.column(id);
    tokenize(&column.name).len() + column.annotation.as_deref().map_or(0, |a| tokenize(a).len()) + 1
}

/// Splits the catalog's columns into segments that fit `token_budget`
/// together with the question tokens. Columns are taken greedily in catalog
/// order; every segment pays once for the header of each table it touches.
pub fn segment_schema(
    catalog: &SchemaCatalog,
    questions_token_len: usize,
    token_budget: usize,
) -> Result<Vec<Vec<ColumnId>>> {
    let longest = catalog
        .column_ids()
        .map(|id| table_header_tokens(catalog, id.table) + column_tokens(catalog, id))
        .max()
        .unwrap_or(0);
    if token_budget <= questions_token_len + longest {
        return Err(Error::Config(format!(
            "token budget {token_budget} cannot hold {questions_token_len} question tokens \
             plus the longest schema item ({longest} tokens)"
        )));
    }
    let mut segments = Vec::new();
    let mut current: Vec<ColumnId> = Vec::new();
    let mut used = questions_token_len;
    let mut current_table = None;
    for id in catalog.column_ids() {
        let header = if current_table == Some(id.table) {
            0
        } else {
            table_header_tokens(catalog, id.table)
        };
        let cost = header + column_tokens(catalog, id);
        if used + cost > token_budget && !current.is_empty() {
            segments.push(std::mem::take(&mut current));
            used = questions_token_len + table_header_tokens(catalog, id.table) + column_tokens(catalog, id);
        } else {
            used += cost;
        }
        current_table = Some(id.table);
        current.push(id);
    }
    if !current.is_empty() || segments.is_empty() {
        segments.push(current);
    }
    Ok(segments)
}

/// Reshuffles with probability `p` and, with probability `p`, inserts one
/// item drawn from `distractor_pool` at a random position. Original items
/// are always kept.
pub fn perturb_schema_items<T: Clone>(items: &[T], p: f64, distractor_pool: &[T], seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perturb_with(items, p, distractor_pool, &mut rng)
}

pub(crate) fn perturb_with<T: Clone>(items: &[T], p: f64, pool: &[T], rng: &mut impl Rng) -> Vec<T> {
    let mut out = items.to_vec();
    if rng.gen_bool(p.clamp(0.0, 1.0)) {
        out.shuffle(rng);
    }
    if rng.gen_bool(p.clamp(0.0, 1.0)) && !pool.is_empty() {
        let pick = pool[rng.gen_range(0..pool.len())].clone();
        let at = rng.gen_range(0..=out.len());
        out.insert(at, pick);
    }
    out
}

/// Probabilities of every schema item of `catalog` for the current turn.
/// `previous` marks the items extracted in the previous turn with `[SN]`.
pub fn predict_probs(
    params: &ExtractorParams,
    provider: &dyn EmbeddingProvider,
    questions: &[String],
    catalog: &SchemaCatalog,
    previous: Option<&ExtractedSchema>,
    config: &TrainConfig,
) -> Result<SchemaProbabilities> {
    let marks = previous.map(Marks::from).unwrap_or_default();
    let mut cache = EmbedCache::new(provider);
    predict_with_marks(params, &mut cache, questions, catalog, &marks, config)
}

pub(crate) fn predict_with_marks(
    params: &ExtractorParams,
    cache: &mut EmbedCache<'_>,
    questions: &[String],
    catalog: &SchemaCatalog,
    marks: &Marks,
    config: &TrainConfig,
) -> Result<SchemaProbabilities> {
    if questions.is_empty() {
        return Err(Error::Validation("predict_probs needs at least one question".into()));
    }
    if cache.provider.dim() != params.d {
        return Err(Error::Validation(format!(
            "provider width {} does not match extractor width {}",
            cache.provider.dim(),
            params.d
        )));
    }
    for id in marks.columns.iter() {
        if id.table >= catalog.tables.len() || id.column >= catalog.tables[id.table].columns.len() {
            return Err(Error::Validation(format!(
                "previous extraction refers to column {id:?} outside catalog `{}`",
                catalog.db_id
            )));
        }
    }
    let ctx = question_context(questions);
    let q_len = tokenize(&ctx).len();
    let segments = segment_schema(catalog, q_len, config.token_budget)?;
    let mut b = ItemBuilder {
        catalog,
        ctx,
        marks,
        cache,
        table_residual: config.table_residual,
    };
    let mut out = SchemaProbabilities::filled(catalog, 0.0);
    let mut seen_table = vec![false; catalog.tables.len()];
    for segment in &segments {
        let tables: BTreeSet<usize> = segment.iter().map(|id| id.table).collect();
        for t in tables {
            let pt = item_probability(params, &b.table(t, false)?, HeadKind::Table)?;
            let ps = item_probability(params, &b.star(t, false)?, HeadKind::Star)?;
            // a table split over several segments keeps its best score
            out.tables[t] = if seen_table[t] { out.tables[t].max(pt) } else { pt };
            out.stars[t] = if seen_table[t] { out.stars[t].max(ps) } else { ps };
            seen_table[t] = true;
        }
        for id in segment {
            out.columns[id.table][id.column] =
                item_probability(params, &b.column(*id, false)?, HeadKind::Column)?;
        }
    }
    // tables without columns never appear in a segment
    for t in 0..catalog.tables.len() {
        if !seen_table[t] {
            out.tables[t] = item_probability(params, &b.table(t, false)?, HeadKind::Table)?;
            out.stars[t] = item_probability(params, &b.star(t, false)?, HeadKind::Star)?;
        }
    }
    Ok(out)
}
