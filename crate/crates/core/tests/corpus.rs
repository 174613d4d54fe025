mod common;

use sqltrack::corpus::*;
use sqltrack::Error;

use common::catalog;

#[test]
fn question_concatenation() {
    let q = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    assert_eq!(concat_questions(&q(&["A"])).unwrap(), "A");
    assert_eq!(concat_questions(&q(&["A", "B"])).unwrap(), "A & B");
    assert_eq!(concat_questions(&q(&["A", "B", "C"])).unwrap(), "A & B & C");
    assert!(matches!(concat_questions(&[]), Err(Error::Validation(_))));
}

fn meta(turn: usize) -> ExampleMeta {
    ExampleMeta {
        db_id: "pets_1".into(),
        interaction: "x".into(),
        turn,
    }
}

#[test]
fn example_rendering() {
    let pets = catalog("pets_1");
    let qs = vec!["How many students?".to_string()];
    let e = build_example(&qs, "student : stuid", "", "select count(*) from STUDENT", &pets, meta(1), DEFAULT_TERMINATOR)
        .unwrap();
    assert!(e.input.contains("You are a SQL query generator that converts multi-turn questions"));
    assert!(e.input.ends_with("Base SQL: \ndatabase schema: student : stuid\nquestion: How many students?"));
    assert_eq!(e.target, "```\nSELECT COUNT(*) FROM student ;\n```\n< | end_of_sentence | >");
    let again =
        build_example(&qs, "student : stuid", "", "select count(*) from STUDENT", &pets, meta(1), DEFAULT_TERMINATOR)
            .unwrap();
    assert_eq!(corpus_to_jsonl(std::slice::from_ref(&e)), corpus_to_jsonl(&[again]));

    let slotted = build_example(&qs, "{schema}", "{sql_base}", "SELECT fname FROM student", &pets, meta(2), "</s>").unwrap();
    assert!(slotted.input.contains("Base SQL: {sql_base}\ndatabase schema: {schema}\n"));

    match build_example(&qs, "", "", "SELECT nosuch FROM student", &pets, meta(3), DEFAULT_TERMINATOR) {
        Err(Error::Validation(m)) => assert!(m.contains("turn 3")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn corpus_file_and_counts() {
    let pets = catalog("pets_1");
    let qs = vec!["q".to_string()];
    let examples: Vec<_> = (1..=3)
        .map(|t| build_example(&qs, "", "", "SELECT fname FROM student", &pets, meta(t), DEFAULT_TERMINATOR).unwrap())
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.jsonl");
    let s = write_corpus(&path, &examples, &["easy", "easy", "hard"]).unwrap();
    assert_eq!(s.total, 3);
    assert_eq!(s.by_difficulty["easy"], 2);
    let text = std::fs::read_to_string(&path).unwrap();
    let back: Vec<FineTuneExample> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(back, examples);
    assert!(write_corpus(&path, &examples, &["easy"]).is_err());
    assert!(matches!(
        write_corpus(dir.path().join("no/such/dir.jsonl"), &examples, &["a", "b", "c"]),
        Err(Error::Io { .. })
    ));
}
