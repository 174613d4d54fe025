mod common;

use std::collections::BTreeMap;

use sqltrack::catalog::*;
use sqltrack::Error;

use common::{all_catalogs, build_mini_databases, catalog, mini_catalogs};

#[test]
fn mini_catalogs_load() {
    let cats = mini_catalogs();
    let ids: Vec<&str> = cats.iter().map(|c| c.db_id.as_str()).collect();
    assert_eq!(ids, ["pets_1", "car_1", "world_1"]);
    let pets = &cats[0];
    assert_eq!(pets.tables.len(), 3);
    assert_eq!(pets.column_count(), 8 + 2 + 4);
    assert_eq!(pets.table_index("STUDENT"), Some(0));
    assert!(pets.foreign_keys.len() >= 2);
}

#[test]
fn benchmark_layout_round_trips() {
    for c in all_catalogs() {
        let back = catalogs_from_benchmark_json(&serde_json::Value::Array(vec![c.to_benchmark_json()])).unwrap();
        assert_eq!(back, vec![c.clone()], "{}", c.db_id);
    }
}

#[test]
fn malformed_descriptors_are_rejected() {
    assert!(matches!(catalogs_from_benchmark_json(&serde_json::json!({})), Err(Error::Format { .. })));
    let mut v = catalog("pets_1").to_benchmark_json();
    v["foreign_keys"] = serde_json::json!([[1, 999]]);
    assert!(catalogs_from_benchmark_json(&serde_json::Value::Array(vec![v])).is_err());
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_catalogs(dir.path().join("missing.json")), Err(Error::Io { .. })));
}

#[test]
fn annotations_attach_by_name() {
    let pets = catalog("pets_1");
    let mut m = BTreeMap::new();
    m.insert(("student".to_string(), None), "enrolled people".to_string());
    m.insert(("Student".to_string(), Some("AGE".to_string())), "age in years".to_string());
    let a = pets.attach_annotations(&m).unwrap();
    assert_eq!(a.tables[0].annotation.as_deref(), Some("enrolled people"));
    let age = a.column_index(0, "age").unwrap();
    assert_eq!(a.tables[0].columns[age].annotation.as_deref(), Some("age in years"));

    let mut bad = BTreeMap::new();
    bad.insert(("nosuch".to_string(), None), "x".to_string());
    assert!(matches!(pets.attach_annotations(&bad), Err(Error::Validation(_))));
    let mut empty = BTreeMap::new();
    empty.insert(("student".to_string(), None), " ".to_string());
    assert!(pets.attach_annotations(&empty).is_err());
}

#[test]
fn annotation_map_filters_by_database() {
    let records = vec![
        AnnotationRecord {
            db_id: "pets_1".into(),
            table: "pets".into(),
            column: None,
            annotation: "animals".into(),
        },
        AnnotationRecord {
            db_id: "car_1".into(),
            table: "cars_data".into(),
            column: None,
            annotation: "cars".into(),
        },
    ];
    let m = annotation_map("pets_1", &records);
    assert_eq!(m.len(), 1);
    assert_eq!(m[&("pets".to_string(), None)], "animals");
}

#[test]
fn value_samples_are_distinct_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    build_mini_databases(dir.path());
    let db = dir.path().join("world_1/world_1.sqlite");
    let a = sample_column_values(&db, "country", "Continent", 3, 7).unwrap();
    assert!(!a.is_empty() && a.len() <= 3);
    let mut d = a.clone();
    d.sort();
    d.dedup();
    assert_eq!(d.len(), a.len());
    assert_eq!(a, sample_column_values(&db, "COUNTRY", "continent", 3, 7).unwrap());
    assert!(matches!(sample_column_values(&db, "country", "nosuch", 3, 7), Err(Error::Validation(_))));
    assert!(sample_column_values(dir.path().join("none.sqlite"), "t", "c", 3, 0).is_err());
}
