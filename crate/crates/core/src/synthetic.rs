//! Generated catalogs and two-turn interactions for exercising training.
//!
//! Table and column names are pseudo-words that never appear in questions.
//! Each item's annotation is a phrase of other pseudo-words, and questions
//! mention items only through their annotation phrases, so an item is
//! relevant exactly when its annotation shares tokens with the question
//! context. The second
//! turn of every interaction refines the first and keeps all of its items.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::catalog::{ColumnDef, ColumnId, ColumnType, SchemaCatalog, TableDef};
use crate::dataset::{Interaction, Turn};

pub const SYNTHETIC_TABLES: usize = 3;
pub const SYNTHETIC_COLUMNS: usize = 4;
/// Pseudo-words per annotation; every one of them appears in a question
/// that mentions the item.
pub const ANNOTATION_WORDS: usize = 4;

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub catalogs: Vec<SchemaCatalog>,
    pub interactions: Vec<Interaction>,
}

const ONSETS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "gl", "kr", "st", "tr", "sn"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "oo", "ai"];
const CODAS: &[&str] = &["", "n", "rk", "x", "m", "lt", "sh", "v"];

fn pseudo_word(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> String {
    loop {
        let mut w = String::new();
        for _ in 0..rng.gen_range(2..=3) {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(VOWELS.choose(rng).unwrap());
        }
        w.push_str(CODAS.choose(rng).unwrap());
        // "sn" alone would collide with the previous-turn marker token
        if w != "sn" && used.insert(w.clone()) {
            return w;
        }
    }
}

fn phrase(rng: &mut ChaCha8Rng, used: &mut BTreeSet<String>) -> String {
    (0..ANNOTATION_WORDS)
        .map(|_| pseudo_word(rng, used))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `catalogs` catalogs of 3 tables × 4 columns and interactions of two
/// turns each until `turns` turns exist (a final odd turn stands alone).
pub fn synthetic_corpus(seed: u64, catalogs: usize, turns: usize) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = BTreeSet::new();
    let mut out = Vec::with_capacity(catalogs);
    for k in 0..catalogs {
        let tables = (0..SYNTHETIC_TABLES)
            .map(|_| TableDef {
                name: pseudo_word(&mut rng, &mut used),
                annotation: Some(phrase(&mut rng, &mut used)),
                columns: (0..SYNTHETIC_COLUMNS)
                    .map(|_| ColumnDef {
                        name: pseudo_word(&mut rng, &mut used),
                        ty: ColumnType::Number,
                        annotation: Some(phrase(&mut rng, &mut used)),
                    })
                    .collect(),
            })
            .collect();
        out.push(
            SchemaCatalog::new(format!("synth_{k}"), tables, vec![], vec![])
                .expect("generated catalog is valid"),
        );
    }

    let mut interactions = Vec::new();
    let mut produced = 0;
    while produced < turns {
        let catalog = &out[rng.gen_range(0..out.len())];
        let n = (turns - produced).min(2);
        interactions.push(Interaction {
            id: format!("s{:04}", interactions.len()),
            db_id: catalog.db_id.clone(),
            turns: interaction(catalog, n, &mut rng),
        });
        produced += n;
    }
    SyntheticCorpus {
        catalogs: out,
        interactions,
    }
}

fn word(catalog: &SchemaCatalog, id: ColumnId) -> &str {
    catalog.column(id).annotation.as_deref().unwrap()
}

fn name(catalog: &SchemaCatalog, id: ColumnId) -> &str {
    &catalog.column(id).name
}

fn interaction(catalog: &SchemaCatalog, n: usize, rng: &mut ChaCha8Rng) -> Vec<Turn> {
    let t = rng.gen_range(0..catalog.tables.len());
    let table = &catalog.tables[t];
    let noun = table.annotation.as_deref().unwrap();
    let mut cols: Vec<usize> = (0..table.columns.len()).collect();
    cols.shuffle(rng);
    let c = |i: usize| ColumnId::new(t, cols[i]);
    let threshold = rng.gen_range(1..10);

    let (first, select) = match rng.gen_range(0..4) {
        0 => (
            Turn {
                question: format!("show the {} of every {noun}", word(catalog, c(0))),
                sql: Some(format!("SELECT {} FROM {}", name(catalog, c(0)), table.name)),
            },
            name(catalog, c(0)).to_string(),
        ),
        1 => (
            Turn {
                question: format!(
                    "show the {} and {} of every {noun}",
                    word(catalog, c(0)),
                    word(catalog, c(1))
                ),
                sql: Some(format!(
                    "SELECT {} , {} FROM {}",
                    name(catalog, c(0)),
                    name(catalog, c(1)),
                    table.name
                )),
            },
            format!("{} , {}", name(catalog, c(0)), name(catalog, c(1))),
        ),
        2 => (
            Turn {
                question: format!(
                    "show the {} of each {noun} whose {} is above {threshold}",
                    word(catalog, c(0)),
                    word(catalog, c(1))
                ),
                sql: Some(format!(
                    "SELECT {} FROM {} WHERE {} > {threshold}",
                    name(catalog, c(0)),
                    table.name,
                    name(catalog, c(1))
                )),
            },
            name(catalog, c(0)).to_string(),
        ),
        _ => (
            Turn {
                question: format!("list all {noun} records"),
                sql: Some(format!("SELECT * FROM {}", table.name)),
            },
            "*".to_string(),
        ),
    };
    let mut turns = vec![first.clone()];
    if n < 2 {
        return turns;
    }
    let where_part = first
        .sql
        .as_deref()
        .and_then(|s| s.split_once(" WHERE "))
        .map(|(_, w)| format!(" WHERE {w}"));
    let second = match (rng.gen_bool(0.5), where_part) {
        // one more filter on a fresh column
        (true, None) => Turn {
            question: format!("only those whose {} is below {threshold}", word(catalog, c(3))),
            sql: Some(format!(
                "SELECT {select} FROM {} WHERE {} < {threshold}",
                table.name,
                name(catalog, c(3))
            )),
        },
        // one more selected column, keeping any filter
        (_, w) => Turn {
            question: format!("also show their {}", word(catalog, c(3))),
            sql: Some(format!(
                "SELECT {select} , {} FROM {}{}",
                name(catalog, c(3)),
                table.name,
                w.unwrap_or_default()
            )),
        },
    };
    turns.push(second);
    turns
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_determinism() {
        let a = synthetic_corpus(7, 3, 200);
        let b = synthetic_corpus(7, 3, 200);
        assert_eq!(a.interactions, b.interactions);
        assert_eq!(a.catalogs.len(), 3);
        let total: usize = a.interactions.iter().map(|i| i.turns.len()).sum();
        assert_eq!(total, 200);
    }
}
