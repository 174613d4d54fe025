//! Threshold filtering, ranking, star insertion and serialization of the
//! extracted schema.
//!
//! Serialized grammar:
//!
//! ```text
//! extraction = [ table { " | " table } [ " | FK : " fk { " , " fk } ] ]
//! table      = name [ " : " item { " , " item } ]
//! item       = name | "*"
//! fk         = name "." name " = " name "." name
//! ```
//!
//! Names are lowercase. The foreign-key side that is referenced comes first.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::catalog::{ColumnId, SchemaCatalog};
use crate::error::{Error, Result};
use crate::sese::SchemaProbabilities;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedColumn {
    pub column: usize,
    /// Absent when the extraction was parsed from text.
    pub prob: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarSlot {
    /// Index in the table's column list before which `*` is placed.
    pub position: usize,
    pub prob: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractedTable {
    pub table: usize,
    pub prob: Option<f64>,
    pub columns: Vec<ExtractedColumn>,
    pub star: Option<StarSlot>,
}

/// Retained tables in descending probability, each with its retained
/// columns in descending probability.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExtractedSchema {
    pub tables: Vec<ExtractedTable>,
}

impl ExtractedSchema {
    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn column_ids(&self) -> impl Iterator<Item = ColumnId> + '_ {
        self.tables
            .iter()
            .flat_map(|t| t.columns.iter().map(move |c| ColumnId::new(t.table, c.column)))
    }

    pub fn table_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.tables.iter().map(|t| t.table)
    }

    /// The same extraction with every probability removed; this is all the
    /// serialized text carries.
    pub fn layout(&self) -> ExtractedSchema {
        ExtractedSchema {
            tables: self
                .tables
                .iter()
                .map(|t| ExtractedTable {
                    table: t.table,
                    prob: None,
                    columns: t
                        .columns
                        .iter()
                        .map(|c| ExtractedColumn {
                            column: c.column,
                            prob: None,
                        })
                        .collect(),
                    star: t.star.as_ref().map(|s| StarSlot {
                        position: s.position,
                        prob: None,
                    }),
                })
                .collect(),
        }
    }

    /// Foreign keys whose both endpoints belong to retained tables, in
    /// catalog order, rendered `referenced.col = referencing.col`.
    pub fn fk_clauses(&self, catalog: &SchemaCatalog) -> Vec<String> {
        let retained: Vec<usize> = self.table_ids().collect();
        catalog
            .foreign_keys
            .iter()
            .filter(|fk| retained.contains(&fk.from.table) && retained.contains(&fk.to.table))
            .map(|fk| format!("{} = {}", qualified(catalog, fk.to), qualified(catalog, fk.from)))
            .collect()
    }
}

fn qualified(catalog: &SchemaCatalog, id: ColumnId) -> String {
    format!(
        "{}.{}",
        catalog.tables[id.table].name.to_lowercase(),
        catalog.column(id).name.to_lowercase()
    )
}

fn descending(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Keeps tables and columns with probability `≥ s` and sorts both levels by
/// descending probability, ties by catalog index. A table with a retained
/// column is kept even when its own probability is below `s`.
pub fn filter_and_rank(probs: &SchemaProbabilities, catalog: &SchemaCatalog, s: f64) -> Result<ExtractedSchema> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::Validation(format!("threshold {s} outside [0, 1]")));
    }
    probs.validate(catalog)?;
    let mut tables = Vec::new();
    for (t, &pt) in probs.tables.iter().enumerate() {
        let mut columns: Vec<ExtractedColumn> = probs.columns[t]
            .iter()
            .enumerate()
            .filter(|(_, p)| **p >= s)
            .map(|(c, p)| ExtractedColumn {
                column: c,
                prob: Some(*p),
            })
            .collect();
        if pt < s && columns.is_empty() {
            continue;
        }
        columns.sort_by(|a, b| descending((a.prob.unwrap(), a.column), (b.prob.unwrap(), b.column)));
        tables.push(ExtractedTable {
            table: t,
            prob: Some(pt),
            columns,
            star: None,
        });
    }
    tables.sort_by(|a, b| descending((a.prob.unwrap(), a.table), (b.prob.unwrap(), b.table)));
    Ok(ExtractedSchema { tables })
}

/// Places `*` in each retained table whose star probability is `≥ s`, at
/// the slot its probability takes in the descending column order. On a tie
/// the star goes after the real columns with the same probability.
pub fn insert_star(extracted: &ExtractedSchema, star_probs: &[f64], s: f64) -> Result<ExtractedSchema> {
    let mut out = extracted.clone();
    for t in &mut out.tables {
        let p = *star_probs.get(t.table).ok_or_else(|| {
            Error::Validation(format!("no star probability for table index {}", t.table))
        })?;
        if p >= s {
            let position = t
                .columns
                .iter()
                .take_while(|c| c.prob.is_none_or(|q| q >= p))
                .count();
            t.star = Some(StarSlot {
                position,
                prob: Some(p),
            });
        } else {
            t.star = None;
        }
    }
    Ok(out)
}

/// Text form of the extraction; see the module docs for the grammar.
pub fn serialize_extracted(extracted: &ExtractedSchema, catalog: &SchemaCatalog) -> String {
    let mut parts: Vec<String> = Vec::new();
    for t in &extracted.tables {
        let name = catalog.tables[t.table].name.to_lowercase();
        let mut items: Vec<String> = t
            .columns
            .iter()
            .map(|c| catalog.column(ColumnId::new(t.table, c.column)).name.to_lowercase())
            .collect();
        if let Some(star) = &t.star {
            items.insert(star.position.min(items.len()), "*".into());
        }
        if items.is_empty() {
            parts.push(name);
        } else {
            parts.push(format!("{name} : {}", items.join(" , ")));
        }
    }
    let fks = extracted.fk_clauses(catalog);
    if !fks.is_empty() {
        parts.push(format!("FK : {}", fks.join(" , ")));
    }
    parts.join(" | ")
}

/// Inverse of [`serialize_extracted`]; probabilities come back as `None`.
pub fn parse_extracted(text: &str, catalog: &SchemaCatalog) -> Result<ExtractedSchema> {
    let bad = |m: String| Error::format("extracted schema", m);
    let mut out = ExtractedSchema::default();
    if text.is_empty() {
        return Ok(out);
    }
    let mut fk_text = None;
    for part in text.split(" | ") {
        if let Some(rest) = part.strip_prefix("FK : ") {
            fk_text = Some(rest);
            continue;
        }
        if fk_text.is_some() {
            return Err(bad("foreign keys must come last".into()));
        }
        let (name, items) = match part.split_once(" : ") {
            Some((n, i)) => (n, Some(i)),
            None => (part, None),
        };
        let table = lookup_table(catalog, name).ok_or_else(|| bad(format!("unknown table `{name}`")))?;
        if out.tables.iter().any(|t| t.table == table) {
            return Err(bad(format!("table `{name}` listed twice")));
        }
        let mut columns = Vec::new();
        let mut star = None;
        for item in items.map(|i| i.split(" , ").collect::<Vec<_>>()).unwrap_or_default() {
            if item == "*" {
                if star.is_some() {
                    return Err(bad(format!("two stars in table `{name}`")));
                }
                star = Some(StarSlot {
                    position: columns.len(),
                    prob: None,
                });
                continue;
            }
            let column = lookup_column(catalog, table, item)
                .ok_or_else(|| bad(format!("unknown column `{name}.{item}`")))?;
            columns.push(ExtractedColumn { column, prob: None });
        }
        out.tables.push(ExtractedTable {
            table,
            prob: None,
            columns,
            star,
        });
    }
    let expected = out.fk_clauses(catalog);
    let found: Vec<&str> = fk_text.map(|f| f.split(" , ").collect()).unwrap_or_default();
    if found != expected {
        return Err(bad(format!(
            "foreign keys {found:?} do not match the retained tables ({expected:?})"
        )));
    }
    Ok(out)
}

fn lookup_table(catalog: &SchemaCatalog, name: &str) -> Option<usize> {
    catalog.tables.iter().position(|t| t.name.to_lowercase() == name)
}

fn lookup_column(catalog: &SchemaCatalog, table: usize, name: &str) -> Option<usize> {
    catalog.tables[table]
        .columns
        .iter()
        .position(|c| c.name.to_lowercase() == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ColumnDef, ColumnType, TableDef};

    fn catalog() -> SchemaCatalog {
        let table = |name: &str, cols: &[&str]| TableDef {
            name: name.into(),
            annotation: None,
            columns: cols
                .iter()
                .map(|c| ColumnDef {
                    name: c.to_string(),
                    ty: ColumnType::Text,
                    annotation: None,
                })
                .collect(),
        };
        SchemaCatalog {
            db_id: "t".into(),
            tables: vec![table("T", &["c1", "c2"]), table("U", &["x"])],
            foreign_keys: vec![],
            primary_keys: vec![],
        }
    }

    #[test]
    fn star_slot_follows_probability() {
        let c = catalog();
        let probs = SchemaProbabilities {
            tables: vec![0.9, 0.0],
            columns: vec![vec![0.9, 0.2], vec![0.0]],
            stars: vec![0.6, 0.0],
        };
        let x = insert_star(&filter_and_rank(&probs, &c, 0.1).unwrap(), &probs.stars, 0.1).unwrap();
        assert_eq!(serialize_extracted(&x, &c), "t : c1 , * , c2");
    }
}
