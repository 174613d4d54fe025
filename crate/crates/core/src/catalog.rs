//! Database schema catalogs.
//!
//! Catalogs are read from the benchmark `tables.json` layout. The leading `*`
//! pseudo-column of that layout is dropped on load: all-column intent is
//! tracked per table by the extractor, so column counts here are real columns
//! only.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rusqlite::types::ValueRef;
use rusqlite::{Connection, OpenFlags};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Sample values are cut to this many characters before they reach a prompt.
pub const SAMPLE_VALUE_MAX_CHARS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Text,
    Number,
    Time,
    Boolean,
    Others,
}

impl ColumnType {
    pub fn parse(raw: &str) -> Self {
        match raw.to_ascii_lowercase().as_str() {
            "text" => ColumnType::Text,
            "number" => ColumnType::Number,
            "time" => ColumnType::Time,
            "boolean" => ColumnType::Boolean,
            _ => ColumnType::Others,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnType::Text => "text",
            ColumnType::Number => "number",
            ColumnType::Time => "time",
            ColumnType::Boolean => "boolean",
            ColumnType::Others => "others",
        }
    }
}

/// Position of a real column: table index and column index within the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct ColumnId {
    pub table: usize,
    pub column: usize,
}

impl ColumnId {
    pub fn new(table: usize, column: usize) -> Self {
        ColumnId { table, column }
    }
}

impl From<[usize; 2]> for ColumnId {
    fn from([table, column]: [usize; 2]) -> Self {
        ColumnId { table, column }
    }
}

impl From<ColumnId> for [usize; 2] {
    fn from(id: ColumnId) -> Self {
        [id.table, id.column]
    }
}

/// `from` references `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct ForeignKey {
    pub from: ColumnId,
    pub to: ColumnId,
}

impl From<[usize; 4]> for ForeignKey {
    fn from([t, c, rt, rc]: [usize; 4]) -> Self {
        ForeignKey {
            from: ColumnId::new(t, c),
            to: ColumnId::new(rt, rc),
        }
    }
}

impl From<ForeignKey> for [usize; 4] {
    fn from(fk: ForeignKey) -> Self {
        [fk.from.table, fk.from.column, fk.to.table, fk.to.column]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ColumnType,
    pub annotation: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDef {
    pub name: String,
    pub annotation: Option<String>,
    pub columns: Vec<ColumnDef>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaCatalog {
    pub db_id: String,
    pub tables: Vec<TableDef>,
    pub foreign_keys: Vec<ForeignKey>,
    pub primary_keys: Vec<ColumnId>,
}

impl SchemaCatalog {
    /// Builds a catalog and checks its invariants.
    pub fn new(
        db_id: impl Into<String>,
        tables: Vec<TableDef>,
        foreign_keys: Vec<ForeignKey>,
        primary_keys: Vec<ColumnId>,
    ) -> Result<Self> {
        let catalog = SchemaCatalog {
            db_id: db_id.into(),
            tables,
            foreign_keys,
            primary_keys,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for table in &self.tables {
            if !seen.insert(table.name.to_lowercase()) {
                return Err(Error::Validation(format!(
                    "duplicate table name `{}` in database `{}`",
                    table.name, self.db_id
                )));
            }
            if table.annotation.as_deref() == Some("") {
                return Err(Error::Validation(format!(
                    "empty annotation on table `{}`",
                    table.name
                )));
            }
            let mut cols = HashSet::new();
            for col in &table.columns {
                if !cols.insert(col.name.to_lowercase()) {
                    return Err(Error::Validation(format!(
                        "duplicate column `{}` in table `{}` of `{}`",
                        col.name, table.name, self.db_id
                    )));
                }
                if col.annotation.as_deref() == Some("") {
                    return Err(Error::Validation(format!(
                        "empty annotation on column `{}.{}`",
                        table.name, col.name
                    )));
                }
            }
        }
        let in_range = |id: &ColumnId| {
            self.tables
                .get(id.table)
                .is_some_and(|t| id.column < t.columns.len())
        };
        for fk in &self.foreign_keys {
            if !in_range(&fk.from) || !in_range(&fk.to) {
                return Err(Error::Validation(format!(
                    "foreign key {:?} out of range in `{}`",
                    <[usize; 4]>::from(*fk),
                    self.db_id
                )));
            }
        }
        for pk in &self.primary_keys {
            if !in_range(pk) {
                return Err(Error::Validation(format!(
                    "primary key {:?} out of range in `{}`",
                    <[usize; 2]>::from(*pk),
                    self.db_id
                )));
            }
        }
        Ok(())
    }

    pub fn table_index(&self, name: &str) -> Option<usize> {
        self.tables
            .iter()
            .position(|t| t.name.eq_ignore_ascii_case(name))
    }

    pub fn column_index(&self, table: usize, name: &str) -> Option<usize> {
        self.tables.get(table)?.columns
            .iter()
            .position(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn column(&self, id: ColumnId) -> &ColumnDef {
        &self.tables[id.table].columns[id.column]
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// All column ids in catalog order.
    pub fn column_ids(&self) -> impl Iterator<Item = ColumnId> + '_ {
        self.tables.iter().enumerate().flat_map(|(t, table)| {
            (0..table.columns.len()).map(move |c| ColumnId::new(t, c))
        })
    }

    /// Returns a copy with the given annotations attached.
    ///
    /// Keys are `(table, None)` for a table and `(table, Some(column))` for a
    /// column, matched case-insensitively. Items not mentioned keep whatever
    /// annotation they already carry.
    pub fn attach_annotations(
        &self,
        annotations: &BTreeMap<(String, Option<String>), String>,
    ) -> Result<SchemaCatalog> {
        let mut out = self.clone();
        let mut unknown = Vec::new();
        for ((table, column), text) in annotations {
            if text.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "empty annotation for {}",
                    display_key(table, column.as_deref())
                )));
            }
            let Some(t) = self.table_index(table) else {
                unknown.push(display_key(table, column.as_deref()));
                continue;
            };
            match column {
                None => out.tables[t].annotation = Some(text.clone()),
                Some(col) => match self.column_index(t, col) {
                    Some(c) => out.tables[t].columns[c].annotation = Some(text.clone()),
                    None => unknown.push(display_key(table, Some(col))),
                },
            }
        }
        if !unknown.is_empty() {
            return Err(Error::Validation(format!(
                "unknown annotation keys in `{}`: {}",
                self.db_id,
                unknown.join(", ")
            )));
        }
        Ok(out)
    }

    /// Re-emits the catalog in the benchmark `tables.json` descriptor layout.
    pub fn to_benchmark_json(&self) -> Value {
        let mut column_names = vec![serde_json::json!([-1, "*"])];
        let mut column_types = vec![Value::from("text")];
        let mut global = Vec::with_capacity(self.tables.len());
        let mut next = 1usize;
        for (t, table) in self.tables.iter().enumerate() {
            global.push(next);
            for col in &table.columns {
                column_names.push(serde_json::json!([t, col.name]));
                column_types.push(Value::from(col.ty.as_str()));
                next += 1;
            }
        }
        let flat = |id: &ColumnId| global[id.table] + id.column;
        let names: Vec<&str> = self.tables.iter().map(|t| t.name.as_str()).collect();
        serde_json::json!({
            "db_id": self.db_id,
            "table_names_original": names,
            "table_names": names,
            "column_names_original": column_names,
            "column_names": column_names,
            "column_types": column_types,
            "foreign_keys": self
                .foreign_keys
                .iter()
                .map(|fk| [flat(&fk.from), flat(&fk.to)])
                .collect::<Vec<_>>(),
            "primary_keys": self.primary_keys.iter().map(flat).collect::<Vec<_>>(),
        })
    }
}

fn display_key(table: &str, column: Option<&str>) -> String {
    match column {
        Some(c) => format!("{table}.{c}"),
        None => table.to_string(),
    }
}

/// Reads every database descriptor from a benchmark `tables.json` file.
pub fn load_catalogs(path: impl AsRef<Path>) -> Result<Vec<SchemaCatalog>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| Error::format(path.display().to_string(), e))?;
    catalogs_from_benchmark_json(&value)
}

pub fn catalogs_from_benchmark_json(value: &Value) -> Result<Vec<SchemaCatalog>> {
    let entries = value
        .as_array()
        .ok_or_else(|| Error::format("tables.json", "expected a JSON array of descriptors"))?;
    entries
        .iter()
        .enumerate()
        .map(|(i, entry)| parse_descriptor(i, entry))
        .collect()
}

#[derive(Deserialize)]
struct RawDescriptor {
    db_id: String,
    table_names_original: Vec<String>,
    column_names_original: Vec<(i64, String)>,
    column_types: Vec<String>,
    #[serde(default)]
    foreign_keys: Vec<(usize, usize)>,
    #[serde(default)]
    primary_keys: Vec<Value>,
}

fn parse_descriptor(index: usize, entry: &Value) -> Result<SchemaCatalog> {
    let name = entry
        .get("db_id")
        .and_then(Value::as_str)
        .map(|s| format!("descriptor {index} (`{s}`)"))
        .unwrap_or_else(|| format!("descriptor {index}"));
    let raw: RawDescriptor =
        serde_json::from_value(entry.clone()).map_err(|e| Error::format(&name, e))?;
    if raw.column_types.len() != raw.column_names_original.len() {
        return Err(Error::format(
            &name,
            "column_types and column_names_original differ in length",
        ));
    }

    let mut tables: Vec<TableDef> = raw
        .table_names_original
        .iter()
        .map(|n| TableDef {
            name: n.clone(),
            annotation: None,
            columns: Vec::new(),
        })
        .collect();
    // Flat benchmark column index -> catalog id; the `*` entry maps to None.
    let mut flat = Vec::with_capacity(raw.column_names_original.len());
    for ((table, col), ty) in raw.column_names_original.iter().zip(&raw.column_types) {
        if *table < 0 {
            flat.push(None);
            continue;
        }
        let t = *table as usize;
        let Some(def) = tables.get_mut(t) else {
            return Err(Error::Validation(format!(
                "{name}: column `{col}` refers to missing table {t}"
            )));
        };
        flat.push(Some(ColumnId::new(t, def.columns.len())));
        def.columns.push(ColumnDef {
            name: col.clone(),
            ty: ColumnType::parse(ty),
            annotation: None,
        });
    }
    let lookup = |i: usize| -> Result<ColumnId> {
        flat.get(i).copied().flatten().ok_or_else(|| {
            Error::Validation(format!("{name}: key references column index {i} out of range"))
        })
    };

    let mut foreign_keys = Vec::with_capacity(raw.foreign_keys.len());
    for (from, to) in &raw.foreign_keys {
        foreign_keys.push(ForeignKey {
            from: lookup(*from)?,
            to: lookup(*to)?,
        });
    }
    // Newer releases nest composite keys as arrays.
    let mut primary_keys = Vec::new();
    for pk in &raw.primary_keys {
        match pk {
            Value::Number(n) => {
                let i = n.as_u64().ok_or_else(|| Error::format(&name, "bad primary key"))?;
                primary_keys.push(lookup(i as usize)?);
            }
            Value::Array(items) => {
                for item in items {
                    let i = item
                        .as_u64()
                        .ok_or_else(|| Error::format(&name, "bad primary key"))?;
                    primary_keys.push(lookup(i as usize)?);
                }
            }
            _ => return Err(Error::format(&name, "bad primary key")),
        }
    }

    let catalog = SchemaCatalog {
        db_id: raw.db_id,
        tables,
        foreign_keys,
        primary_keys,
    };
    catalog.validate()?;
    Ok(catalog)
}

/// One generated annotation, as stored in annotation files.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub db_id: String,
    pub table: String,
    pub column: Option<String>,
    pub annotation: String,
}

/// Groups annotation records for one database into the map taken by
/// [`SchemaCatalog::attach_annotations`].
pub fn annotation_map(
    db_id: &str,
    records: &[AnnotationRecord],
) -> BTreeMap<(String, Option<String>), String> {
    records
        .iter()
        .filter(|r| r.db_id == db_id)
        .map(|r| ((r.table.clone(), r.column.clone()), r.annotation.clone()))
        .collect()
}

/// Draws up to `k` distinct non-null values from one column of a SQLite file.
///
/// Rows are read in storage order, de-duplicated on first occurrence, and a
/// seeded reservoir keeps `k` of them. The result is ordered by first
/// occurrence, so it depends only on the file contents and the arguments.
pub fn sample_column_values(
    db_path: impl AsRef<Path>,
    table: &str,
    column: &str,
    k: usize,
    seed: u64,
) -> Result<Vec<String>> {
    let db_path = db_path.as_ref();
    fs::File::open(db_path).map_err(|e| Error::io(db_path, e))?;
    let db_err = |e: rusqlite::Error| Error::Database {
        path: db_path.to_path_buf(),
        message: e.to_string(),
    };
    let conn = Connection::open_with_flags(
        db_path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )
    .map_err(db_err)?;

    let mut info = conn
        .prepare(&format!("PRAGMA table_info({})", quote_ident(table)))
        .map_err(db_err)?;
    let names: Vec<String> = info
        .query_map([], |row| row.get::<_, String>(1))
        .map_err(db_err)?
        .collect::<std::result::Result<_, _>>()
        .map_err(db_err)?;
    let Some(actual) = names.iter().find(|n| n.eq_ignore_ascii_case(column)) else {
        return Err(Error::Validation(format!(
            "column `{table}.{column}` not found in {}",
            db_path.display()
        )));
    };

    let sql = format!(
        "SELECT {col} FROM {tab} WHERE {col} IS NOT NULL",
        col = quote_ident(actual),
        tab = quote_ident(table)
    );
    let mut stmt = conn.prepare(&sql).map_err(db_err)?;
    let mut rows = stmt.query([]).map_err(db_err)?;
    let mut seen = HashSet::new();
    let mut distinct = Vec::new();
    while let Some(row) = rows.next().map_err(db_err)? {
        let text = render_value(row.get_ref(0).map_err(db_err)?);
        if seen.insert(text.clone()) {
            distinct.push(text);
        }
    }

    Ok(reservoir(distinct, k, seed)
        .into_iter()
        .map(|v| truncate_chars(&v, SAMPLE_VALUE_MAX_CHARS))
        .collect())
}

/// Algorithm R over `items`, returning the kept items in input order.
pub(crate) fn reservoir<T>(items: Vec<T>, k: usize, seed: u64) -> Vec<T> {
    if items.len() <= k {
        return items;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<usize> = (0..k).collect();
    for i in k..items.len() {
        let j = rng.gen_range(0..=i);
        if j < k {
            kept[j] = i;
        }
    }
    kept.sort_unstable();
    let mut items: Vec<Option<T>> = items.into_iter().map(Some).collect();
    kept.into_iter().filter_map(|i| items[i].take()).collect()
}

fn render_value(value: ValueRef<'_>) -> String {
    match value {
        ValueRef::Null => String::new(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(f) => f.to_string(),
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
        ValueRef::Blob(b) => hex::encode(b),
    }
}

fn truncate_chars(s: &str, max: usize) -> String {
    s.chars().take(max).collect()
}

pub(crate) fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}
