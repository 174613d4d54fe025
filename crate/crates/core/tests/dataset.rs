mod common;

use serde_json::json;
use sqltrack::dataset::*;
use sqltrack::synthetic::synthetic_corpus;
use sqltrack::Error;

use common::{catalog, mini_catalogs, mini_interactions, mini_turns};

#[test]
fn mini_dataset_labels_without_skips() {
    let cats = mini_catalogs();
    let interactions = mini_interactions(&cats);
    assert_eq!(interactions.len(), 10);
    assert_eq!(interactions.iter().map(|i| i.turns.len()).sum::<usize>(), 27);
    let turns = mini_turns(&cats);
    assert_eq!(turns.len(), 27);
    for t in &turns {
        assert_eq!(t.questions.len(), t.turn);
        assert_eq!(t.previous.is_some(), t.turn > 1);
        for c in &t.labels.columns {
            assert!(t.labels.tables.contains(&c.table));
        }
    }
    // loading is deterministic
    assert_eq!(turns, mini_turns(&cats));
}

#[test]
fn star_select_is_labelled() {
    let world = catalog("world_1");
    let v = json!([{"database_id": "world_1", "interaction": [{"utterance": "Show  all\ncountries", "query": "SELECT * FROM country"}]}]);
    let interactions = interactions_from_json(&v, std::slice::from_ref(&world)).unwrap();
    assert_eq!(interactions[0].turns[0].question, "Show all countries");
    assert_eq!(interactions[0].id, "0");
    let labeled = label_turns(&interactions, std::slice::from_ref(&world)).unwrap();
    let country = world.table_index("country").unwrap();
    assert!(labeled.turns[0].labels.star_tables.contains(&country));
}

#[test]
fn empty_array_gives_no_interactions() {
    assert!(interactions_from_json(&json!([]), &mini_catalogs()).unwrap().is_empty());
}

#[test]
fn unknown_database_is_named() {
    let v = json!([{"database_id": "nowhere", "interaction": [{"utterance": "q", "query": "SELECT 1"}]}]);
    match interactions_from_json(&v, &mini_catalogs()) {
        Err(Error::Validation(m)) => assert!(m.contains("nowhere")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_entry_names_its_index() {
    let v = json!([
        {"database_id": "pets_1", "interaction": [{"utterance": "q", "query": "SELECT 1"}]},
        {"database_id": "pets_1", "interaction": [{"query": "SELECT 1"}]},
    ]);
    match interactions_from_json(&v, &mini_catalogs()) {
        Err(Error::Format { context, .. }) => assert_eq!(context, "interaction 1"),
        other => panic!("{other:?}"),
    }
    assert!(interactions_from_json(&json!({"a": 1}), &mini_catalogs()).is_err());
}

#[test]
fn bad_gold_sql_is_skipped_with_position() {
    let cats = mini_catalogs();
    let v = json!([{"database_id": "pets_1", "interaction_id": 7, "interaction": [
        {"utterance": "a", "query": "SELECT count(*) FROM student"},
        {"utterance": "b", "query": "SELECT nosuch FROM student"},
        {"utterance": "c"},
        {"utterance": "d", "query": "SELECT fname FROM student"},
    ]}]);
    let labeled = label_turns(&interactions_from_json(&v, &cats).unwrap(), &cats).unwrap();
    assert_eq!(labeled.turns.len(), 2);
    let skipped: Vec<(String, usize)> = labeled.skipped.iter().map(|s| (s.interaction.clone(), s.turn)).collect();
    assert_eq!(skipped, vec![("7".to_string(), 2), ("7".to_string(), 3)]);
    // the turn after a skip has no previous labels
    assert_eq!(labeled.turns[1].turn, 4);
    assert!(labeled.turns[1].previous.is_none());
}

#[test]
fn synthetic_corpus_is_separable_by_construction() {
    let c = synthetic_corpus(1, 3, 20);
    assert_eq!(c.catalogs.len(), 3);
    let labeled = label_turns(&c.interactions, &c.catalogs).unwrap();
    assert_eq!(labeled.turns.len(), 20);
    assert!(labeled.skipped.is_empty());
    for t in &labeled.turns {
        let cat = c.catalogs.iter().find(|x| x.db_id == t.db_id).unwrap();
        let q = t.questions.join(" ").to_lowercase();
        for col in &t.labels.columns {
            let c = cat.column(*col);
            assert!(!q.contains(&c.name.to_lowercase()), "{q}");
            assert!(q.contains(c.annotation.as_deref().unwrap()), "{q}");
        }
    }
    let again = synthetic_corpus(1, 3, 20);
    assert_eq!(again.interactions, c.interactions);
}
