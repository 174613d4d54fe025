mod common;

use std::collections::BTreeSet;

use common::oracle::{brute_crs, brute_trs, random_sample, to_sample};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqltrack::metrics::*;
use sqltrack::pipeline::{evaluate_predictions, match_turn, Prediction};
use sqltrack::Error;

use common::{build_mini_databases, case_sql, catalog, mini_catalogs, mini_turns};

fn set(v: &[usize]) -> BTreeSet<usize> {
    v.iter().copied().collect()
}

#[test]
fn sample_score_branches() {
    assert_eq!(sample_score(&set(&[1, 2]), &set(&[1, 2])), 0.0);
    assert!((sample_score(&set(&[1, 2]), &set(&[1, 2, 3])) - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(sample_score(&set(&[1, 2]), &set(&[1, 3])), 1.0);
    assert_eq!(sample_score(&set(&[1]), &set(&[])), 1.0);
}

#[test]
fn redundancy_examples() {
    let exact = to_sample(&common::oracle::RawSample {
        gold_tables: vec![0],
        extracted_tables: vec![0],
        gold_columns: vec![(0, 0)],
        extracted_columns: vec![(0, 0), (0, 1)],
    });
    assert_eq!(trs(std::slice::from_ref(&exact)).unwrap(), 0.0);
    assert_eq!(crs(std::slice::from_ref(&exact)).unwrap(), 50.0);

    let miss = to_sample(&common::oracle::RawSample {
        gold_tables: vec![0, 1],
        extracted_tables: vec![2],
        gold_columns: vec![(0, 0)],
        extracted_columns: vec![],
    });
    assert_eq!(trs(&[miss.clone(), miss.clone()]).unwrap(), 100.0);
    // table 1 has no gold columns and none extracted, so it scores 0
    assert_eq!(crs(&[miss]).unwrap(), 50.0);

    assert!(matches!(trs(&[]), Err(Error::Validation(_))));
    assert!(matches!(crs(&[]), Err(Error::Validation(_))));
}

#[test]
fn redundancy_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for i in 0..500 {
        let n = rng.gen_range(1..8);
        let raws: Vec<_> = (0..n).map(|j| random_sample(&mut rng, ((i + j) % 3) as u8)).collect();
        let samples: Vec<_> = raws.iter().map(to_sample).collect();
        assert_eq!(trs(&samples).unwrap(), brute_trs(&raws), "instance {i}");
        assert_eq!(crs(&samples).unwrap(), brute_crs(&raws), "instance {i}");
        let report = redundancy_report(&samples, 0.5).unwrap();
        assert_eq!(report.table_scores.len(), n);
    }
}

#[test]
fn exact_match_case_five() {
    let gold = case_sql(5, "gold");
    let world = catalog(&gold.db_id);
    assert!(!exact_match(&case_sql(5, "without_extractor").sql, &gold.sql, &world));
    assert!(exact_match(&case_sql(5, "full").sql, &gold.sql, &world));
}

fn turn(interaction: &str, t: usize, em: bool, ex: Option<bool>) -> TurnMatch {
    TurnMatch {
        interaction: interaction.into(),
        turn: t,
        em,
        ex,
    }
}

#[test]
fn aggregate_examples() {
    let all = aggregate(&[turn("a", 1, true, None), turn("a", 2, true, None)]).unwrap();
    assert_eq!((all.qm_em, all.im_em), (1.0, 1.0));
    assert_eq!((all.qm_ex, all.im_ex), (None, None));
    assert!(all.to_table().contains("n/a"));

    let half = aggregate(&[
        turn("a", 1, true, Some(true)),
        turn("a", 2, false, Some(true)),
        turn("b", 1, true, Some(false)),
    ])
    .unwrap();
    assert!((half.qm_em - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(half.im_em, 0.5);
    assert_eq!(half.im_ex, Some(0.5));
    assert_eq!(half.interactions[0].em_correct, 1);
    assert!(aggregate(&[]).is_err());
}

proptest! {
    // With equal-length interactions a fully correct interaction contributes
    // as much to qm as to im, so im <= qm.
    #[test]
    fn interaction_rate_never_exceeds_question_rate(
        len in 1usize..5,
        pattern in prop::collection::vec((any::<bool>(), any::<bool>()), 1..10),
    ) {
        let matches: Vec<TurnMatch> = (0..pattern.len() * len)
            .map(|k| {
                let (em, ex) = pattern[(k * 7 + 3) % pattern.len()];
                turn(&format!("i{}", k / len), k % len + 1, em ^ (k % 3 == 0), Some(ex))
            })
            .collect();
        let r = aggregate(&matches).unwrap();
        prop_assert!(r.im_em <= r.qm_em + 1e-15);
        prop_assert!(r.im_ex.unwrap() <= r.qm_ex.unwrap() + 1e-15);
        prop_assert_eq!(&r, &aggregate(&matches).unwrap());
    }

    // Any lengths: turns inside fully correct interactions are a subset of
    // the correct turns.
    #[test]
    fn fully_correct_turns_are_correct_turns(
        pattern in prop::collection::vec((0usize..6, any::<bool>()), 1..40),
    ) {
        let matches: Vec<TurnMatch> = pattern
            .iter()
            .enumerate()
            .map(|(i, (g, em))| turn(&format!("i{g}"), i + 1, *em, None))
            .collect();
        let r = aggregate(&matches).unwrap();
        let full_turns: usize = r.interactions.iter().filter(|i| i.em_correct == i.turns).map(|i| i.turns).sum();
        prop_assert!(full_turns as f64 / matches.len() as f64 <= r.qm_em + 1e-15);
    }
}

#[test]
fn interaction_rate_can_exceed_question_rate_with_uneven_lengths() {
    let r = aggregate(&[turn("a", 1, false, None), turn("a", 2, false, None), turn("b", 1, true, None)]).unwrap();
    assert!((r.qm_em - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(r.im_em, 0.5);
}

#[test]
fn execution_match_on_sqlite() {
    let dir = tempfile::tempdir().unwrap();
    build_mini_databases(dir.path());
    let x = SqliteExecutor::new(dir.path());
    let pets = catalog("pets_1");

    let gold = "SELECT fname FROM student WHERE age > 19";
    assert!(execution_match(&x, &pets, gold, gold).unwrap());
    assert!(!execution_match(&x, &pets, "SELECT nosuch FROM student", gold).unwrap());
    // structurally different, same rows
    let alt = "SELECT fname FROM student WHERE age >= 20";
    assert!(!exact_match(alt, gold, &pets));
    assert!(execution_match(&x, &pets, alt, gold).unwrap());

    // row order counts only under a gold ORDER BY
    let asc = "SELECT fname FROM student ORDER BY age";
    let desc = "SELECT fname FROM student ORDER BY age DESC";
    assert!(!execution_match(&x, &pets, desc, asc).unwrap());
    assert!(execution_match(&x, &pets, desc, "SELECT fname FROM student").unwrap());

    let rows = x.run("pets_1", "SELECT count(*) FROM pets").unwrap();
    assert_eq!(rows, vec![vec!["3".to_string()]]);
    assert!(matches!(x.run("nosuch", "SELECT 1"), Err(Error::Database { .. })));
}

#[test]
fn missing_predictions_count_as_wrong() {
    let cats = mini_catalogs();
    let turns = mini_turns(&cats);
    let preds: Vec<Prediction> = turns
        .iter()
        .skip(1)
        .map(|t| Prediction {
            db_id: t.db_id.clone(),
            interaction: t.interaction.clone(),
            turn: t.turn,
            sql: t.sql.clone(),
        })
        .collect();
    let r = evaluate_predictions(&turns, &preds, &cats, None).unwrap();
    let n = turns.len() as f64;
    assert!((r.qm_em - (n - 1.0) / n).abs() < 1e-12);
    assert_eq!(r.qm_ex, None);
    assert!(r.im_em < 1.0);
    assert_eq!(r.interactions[0].interaction, format!("{}/{}", turns[0].db_id, turns[0].interaction));

    let dir = tempfile::tempdir().unwrap();
    build_mini_databases(dir.path());
    let x = SqliteExecutor::new(dir.path());
    let r = evaluate_predictions(&turns, &preds, &cats, Some(&x)).unwrap();
    assert!((r.qm_ex.unwrap() - (n - 1.0) / n).abs() < 1e-12);
    let first = &turns[0];
    let m = match_turn(&first.db_id, &first.interaction, 1, None, &first.sql, &cats[0], Some(&x)).unwrap();
    assert_eq!((m.em, m.ex), (false, Some(false)));
}

#[test]
fn misaligned_predictions_are_rejected() {
    let cats = mini_catalogs();
    let turns = mini_turns(&cats);
    let t = &turns[0];
    let p = Prediction {
        db_id: t.db_id.clone(),
        interaction: t.interaction.clone(),
        turn: t.turn,
        sql: t.sql.clone(),
    };
    let dup = vec![p.clone(), p.clone()];
    assert!(matches!(evaluate_predictions(&turns, &dup, &cats, None), Err(Error::Validation(_))));
    let stray = vec![Prediction { turn: 99, ..p }];
    assert!(matches!(evaluate_predictions(&turns, &stray, &cats, None), Err(Error::Validation(_))));
}
