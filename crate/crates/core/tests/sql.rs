mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use sqltrack::catalog::ColumnId;
use sqltrack::sql::{
    canonical_components, classify_difficulty, classify_difficulty_with, is_valid_sql, parse,
    referenced_schema, render, Difficulty, SetOpKind,
};
use sqltrack::Error;

use common::{case_sql, case_study, catalog, em_pairs};
use sqltrack::metrics::exact_match;

fn col(cat: &sqltrack::catalog::SchemaCatalog, t: &str, c: &str) -> ColumnId {
    let ti = cat.table_index(t).unwrap();
    ColumnId::new(ti, cat.column_index(ti, c).unwrap())
}

#[test]
fn simple_select() {
    let pets = catalog("pets_1");
    let q = parse("SELECT stuid FROM student", &pets).unwrap();
    assert_eq!(q.select.len(), 1);
    assert_eq!(q.from.tables().count(), 1);
}

#[test]
fn except_with_two_joins() {
    let pets = catalog("pets_1");
    let q = parse(&case_sql(1, "gold").sql, &pets).unwrap();
    let op = q.set_op.as_ref().unwrap();
    assert_eq!(op.kind, SetOpKind::Except);
    assert_eq!(op.right.from.tables().count(), 3);
}

#[test]
fn select_without_items_is_a_syntax_error() {
    let pets = catalog("pets_1");
    assert!(matches!(parse("SELECT FROM x", &pets), Err(Error::Syntax { .. })));
}

#[test]
fn unknown_names_are_binding_errors() {
    let pets = catalog("pets_1");
    assert!(matches!(parse("SELECT nosuch FROM student", &pets), Err(Error::Binding(_))));
    assert!(matches!(parse("SELECT stuid FROM nosuch", &pets), Err(Error::Binding(_))));
    // stuid lives in both tables
    assert!(matches!(
        parse("SELECT stuid FROM student JOIN has_pet ON student.stuid = has_pet.stuid", &pets),
        Err(Error::Binding(_))
    ));
}

#[test]
fn syntax_error_reports_byte_position() {
    let pets = catalog("pets_1");
    match parse("SELECT stuid FROM student WHERE", &pets) {
        Err(Error::Syntax { position, .. }) => assert_eq!(position, 31),
        other => panic!("{other:?}"),
    }
}

#[test]
fn correlated_subquery_binds_outer_alias() {
    let pets = catalog("pets_1");
    let q = parse(
        "SELECT T1.fname FROM student AS T1 WHERE 1 < (SELECT count(*) FROM has_pet AS T2 WHERE T2.stuid = T1.stuid)",
        &pets,
    )
    .unwrap();
    let labels = referenced_schema(&q);
    assert!(labels.columns.contains(&col(&pets, "student", "stuid")));
    assert!(labels.columns.contains(&col(&pets, "has_pet", "stuid")));
}

#[test]
fn order_by_select_alias() {
    let pets = catalog("pets_1");
    let sql = "SELECT pettype, count(*) AS cnt FROM pets GROUP BY pettype ORDER BY cnt DESC LIMIT 1";
    let q = parse(sql, &pets).unwrap();
    assert_eq!(
        render(&q, &pets),
        "SELECT pettype, COUNT(*) AS cnt FROM pets GROUP BY pettype ORDER BY cnt DESC LIMIT 1"
    );
}

#[test]
fn star_labels() {
    let world = catalog("world_1");
    let labels = referenced_schema(&parse("SELECT * FROM country", &world).unwrap());
    let country = world.table_index("country").unwrap();
    assert_eq!(labels.tables, BTreeSet::from([country]));
    assert!(labels.columns.is_empty());
    assert_eq!(labels.star_tables, BTreeSet::from([country]));

    let car = catalog("car_1");
    let labels = referenced_schema(&parse("SELECT count(*) FROM model_list", &car).unwrap());
    let ml = car.table_index("model_list").unwrap();
    assert_eq!(labels.tables, BTreeSet::from([ml]));
    assert_eq!(labels.star_tables, BTreeSet::from([ml]));
}

#[test]
fn case_one_gold_labels() {
    let pets = catalog("pets_1");
    let labels = referenced_schema(&parse(&case_sql(1, "gold").sql, &pets).unwrap());
    let tables: BTreeSet<usize> = ["student", "has_pet", "pets"]
        .iter()
        .map(|t| pets.table_index(t).unwrap())
        .collect();
    assert_eq!(labels.tables, tables);
    let expected = [
        ("student", "stuid"),
        ("has_pet", "stuid"),
        ("has_pet", "petid"),
        ("pets", "petid"),
        ("pets", "pettype"),
    ];
    let expected: BTreeSet<ColumnId> = expected.iter().map(|(t, c)| col(&pets, t, c)).collect();
    assert_eq!(labels.columns, expected);
    assert!(labels.star_tables.is_empty());
    for c in &labels.columns {
        assert!(labels.tables.contains(&c.table));
    }
}

#[test]
fn difficulty_examples() {
    let pets = catalog("pets_1");
    let d = |sql: &str| classify_difficulty(&parse(sql, &pets).unwrap());
    assert_eq!(d("SELECT fname FROM student"), Difficulty::Easy);
    assert_eq!(d("SELECT count(*) FROM student"), Difficulty::Medium);
    assert_eq!(d("SELECT fname FROM student ORDER BY age"), Difficulty::Medium);
    assert_eq!(d("SELECT fname, lname FROM student"), Difficulty::Medium);
    assert_eq!(
        d("SELECT stuid FROM student EXCEPT SELECT stuid FROM has_pet"),
        Difficulty::Hard
    );
    assert_eq!(
        d("SELECT fname FROM student WHERE age > 20 AND sex = 'F' AND major = 600"),
        Difficulty::Hard
    );
    assert_eq!(
        d("SELECT stuid FROM student WHERE age > 20 AND sex = 'F' AND major = 600 EXCEPT SELECT stuid FROM has_pet"),
        Difficulty::Extra
    );
    assert_eq!(
        d("SELECT fname FROM student WHERE stuid IN (SELECT stuid FROM has_pet)"),
        Difficulty::Hard
    );
    assert_eq!(
        d("SELECT fname, lname, age FROM student GROUP BY sex, major"),
        Difficulty::Extra
    );
    // a stricter Extra threshold demotes the same query
    let q = parse("SELECT fname, lname, age FROM student GROUP BY sex, major", &pets).unwrap();
    assert_eq!(classify_difficulty_with(&q, 3), Difficulty::Hard);
}

#[test]
fn validity() {
    let pets = catalog("pets_1");
    assert!(is_valid_sql(&case_sql(1, "full").sql, &pets));
    assert!(!is_valid_sql("SELEC x FRM t", &pets));
    assert!(!is_valid_sql("SELECT height FROM student", &pets));
}

#[test]
fn every_case_study_query_parses_and_round_trips() {
    for case in case_study() {
        let cat = catalog(&case.db_id);
        let q = parse(&case.sql, &cat).unwrap_or_else(|e| panic!("case {}: {e}", case.case));
        let text = render(&q, &cat);
        let again = parse(&text, &cat).unwrap();
        assert_eq!(q, again, "{text}");
        assert_eq!(render(&again, &cat), text);
    }
}

#[test]
fn canonical_rendering() {
    let pets = catalog("pets_1");
    let q = parse(&case_sql(1, "gold").sql, &pets).unwrap();
    assert_eq!(
        render(&q, &pets),
        "SELECT stuid FROM student EXCEPT SELECT t1.stuid FROM student AS t1 \
         JOIN has_pet AS t2 ON t1.stuid = t2.stuid JOIN pets AS t3 ON t3.petid = t2.petid \
         WHERE t3.pettype = 'cat'"
    );
    let q = parse(
        "select (age + 1) * 2, age - (major - 1), age - major - 1 from student where not (age > 1 or sex = \"it's\")",
        &pets,
    )
    .unwrap();
    assert_eq!(
        render(&q, &pets),
        "SELECT (age + 1) * 2, age - (major - 1), age - major - 1 FROM student \
         WHERE NOT (age > 1 OR sex = 'it''s')"
    );
}

#[test]
fn exact_match_hand_pairs() {
    let pairs = em_pairs();
    assert_eq!(pairs.len(), 20);
    for p in &pairs {
        let cat = catalog(&p.db_id);
        assert_eq!(exact_match(&p.a, &p.b, &cat), p.equal, "{} | {}", p.a, p.b);
        assert_eq!(exact_match(&p.b, &p.a, &cat), p.equal, "symmetry: {} | {}", p.a, p.b);
        assert!(exact_match(&p.a, &p.a, &cat));
    }
}

#[test]
fn unparseable_prediction_never_matches() {
    let pets = catalog("pets_1");
    assert!(!exact_match("SELECT FROM", "SELECT fname FROM student", &pets));
    assert!(!exact_match("SELECT nosuch FROM student", "SELECT fname FROM student", &pets));
}

// ---------------------------------------------------------------------------
// Generated queries over the pets schema.

fn student_col() -> impl Strategy<Value = &'static str> {
    prop::sample::select(vec!["stuid", "lname", "fname", "age", "sex", "major", "advisor", "city_code"])
}

fn value() -> impl Strategy<Value = String> {
    prop_oneof![
        (0u32..1000).prop_map(|n| n.to_string()),
        "[a-z ']{0,6}".prop_map(|s| format!("'{}'", s.replace('\'', "''"))),
    ]
}

fn predicate() -> impl Strategy<Value = String> {
    prop_oneof![
        (student_col(), prop::sample::select(vec!["=", "!=", "<", ">=", "<>"]), value())
            .prop_map(|(c, op, v)| format!("{c} {op} {v}")),
        (student_col(), value(), value()).prop_map(|(c, a, b)| format!("{c} BETWEEN {a} AND {b}")),
        (student_col(), value()).prop_map(|(c, v)| format!("{c} NOT LIKE {v}")),
        (student_col(), prop::collection::vec(value(), 1..3))
            .prop_map(|(c, vs)| format!("{c} IN ({})", vs.join(", "))),
        Just("stuid IN (SELECT stuid FROM has_pet)".to_string()),
        student_col().prop_map(|c| format!("{c} IS NOT NULL")),
        (student_col(), student_col()).prop_map(|(a, b)| format!("({a} + 1) * 2 > {b} - 3")),
    ]
}

fn condition() -> impl Strategy<Value = String> {
    let leaf = predicate();
    leaf.prop_recursive(3, 8, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(|v| v.join(" AND ")),
            prop::collection::vec(inner.clone(), 2..4).prop_map(|v| format!("({})", v.join(" OR "))),
            inner.prop_map(|c| format!("NOT ({c})")),
        ]
    })
}

fn select_item() -> impl Strategy<Value = String> {
    prop_oneof![
        student_col().prop_map(str::to_string),
        (prop::sample::select(vec!["count", "sum", "avg", "min", "max"]), student_col())
            .prop_map(|(f, c)| format!("{f}({c})")),
        Just("count(*)".to_string()),
        student_col().prop_map(|c| format!("count(DISTINCT {c})")),
    ]
}

fn query() -> impl Strategy<Value = String> {
    (
        any::<bool>(),
        prop::collection::vec(select_item(), 1..4),
        prop::option::of(condition()),
        prop::collection::vec(student_col(), 0..3),
        prop::option::of((student_col(), any::<bool>())),
        prop::option::of(1u64..10),
        prop::option::of(prop::sample::select(vec!["UNION", "INTERSECT", "EXCEPT"])),
    )
        .prop_map(|(distinct, items, cond, group, order, limit, setop)| {
            let mut s = format!(
                "SELECT {}{} FROM student",
                if distinct { "DISTINCT " } else { "" },
                items.join(", ")
            );
            if let Some(c) = cond {
                s.push_str(&format!(" WHERE {c}"));
            }
            if !group.is_empty() {
                s.push_str(&format!(" GROUP BY {}", group.join(", ")));
            }
            if let Some((c, desc)) = order {
                s.push_str(&format!(" ORDER BY {c}{}", if desc { " DESC" } else { " ASC" }));
            }
            if let Some(n) = limit {
                s.push_str(&format!(" LIMIT {n}"));
            }
            if let Some(op) = setop {
                s.push_str(&format!(" {op} SELECT T1.stuid FROM student AS T1 JOIN has_pet AS T2 ON T1.stuid = T2.stuid"));
            }
            s
        })
}

proptest! {
    #[test]
    fn render_is_a_parse_fixed_point(sql in query()) {
        let pets = catalog("pets_1");
        let q = parse(&sql, &pets).unwrap();
        let text = render(&q, &pets);
        let again = parse(&text, &pets).unwrap();
        prop_assert_eq!(&q, &again);
        prop_assert_eq!(render(&again, &pets), text);
    }

    #[test]
    fn labels_stay_in_catalog_range(sql in query()) {
        let pets = catalog("pets_1");
        let labels = referenced_schema(&parse(&sql, &pets).unwrap());
        for t in labels.tables.iter().chain(&labels.star_tables) {
            prop_assert!(*t < pets.tables.len());
        }
        for c in &labels.columns {
            prop_assert!(labels.tables.contains(&c.table));
            prop_assert!(c.column < pets.tables[c.table].columns.len());
        }
    }

    #[test]
    fn components_ignore_case_and_values(sql in query()) {
        let pets = catalog("pets_1");
        let upper = sql.to_uppercase();
        let a = canonical_components(&parse(&sql, &pets).unwrap(), &pets);
        let b = canonical_components(&parse(&upper, &pets).unwrap(), &pets);
        prop_assert_eq!(a, b);
    }
}
