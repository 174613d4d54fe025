mod common;

use common::oracle::{check_selection, entropy_js, random_history, simulate_window, OverlapSimilarity};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqltrack::context::*;
use sqltrack::sese::SchemaProbabilities;
use sqltrack::Error;

use common::catalog;

#[test]
fn window_examples() {
    let mut w = ContextWindow::new(5).unwrap();
    w.slide(1).unwrap();
    assert_eq!(w.turns().collect::<Vec<_>>(), vec![1]);
    for t in 2..=6 {
        w.slide(t).unwrap();
    }
    assert_eq!(w.turns().collect::<Vec<_>>(), vec![2, 3, 4, 5, 6]);

    let mut one = ContextWindow::new(1).unwrap();
    for t in [3, 4, 9] {
        one.slide(t).unwrap();
        assert_eq!(one.turns().collect::<Vec<_>>(), vec![t]);
    }
}

#[test]
fn window_rejects_bad_input() {
    assert!(matches!(ContextWindow::new(0), Err(Error::Config(_))));
    let mut w = ContextWindow::new(3).unwrap();
    w.slide(4).unwrap();
    assert!(matches!(w.slide(4), Err(Error::Validation(_))));
    assert!(matches!(w.slide(2), Err(Error::Validation(_))));
}

proptest! {
    #[test]
    fn window_matches_queue_simulation(
        subset in prop::collection::btree_set(1usize..40, 0..20),
        cap in 1usize..8,
    ) {
        let turns: Vec<usize> = subset.into_iter().collect();
        let expected = simulate_window(&turns, cap);
        let mut w = ContextWindow::new(cap).unwrap();
        for (t, state) in turns.iter().zip(&expected) {
            w.slide(*t).unwrap();
            prop_assert_eq!(&w.turns().collect::<Vec<_>>(), state);
        }
    }
}

fn probs(tables: Vec<f64>, columns: Vec<Vec<f64>>) -> SchemaProbabilities {
    let stars = vec![0.0; tables.len()];
    SchemaProbabilities { tables, columns, stars }
}

#[test]
fn normalization_examples() {
    let a = normalize_probs(&probs(vec![1.0], vec![vec![1.0]]));
    assert!((a[0] - 0.5).abs() < 1e-15 && (a[1] - 0.5).abs() < 1e-15);
    let b = normalize_probs(&probs(vec![0.0, 0.0], vec![vec![0.0], vec![]]));
    assert!(b.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-15));
    // stars do not take part
    let mut c = probs(vec![1.0], vec![vec![1.0]]);
    c.stars = vec![0.9];
    assert_eq!(normalize_probs(&c), a);
}

#[test]
fn divergence_examples() {
    assert!((js_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap() - 0.311278).abs() < 1e-6);
    assert!(js_divergence(&[0.2, 0.3, 0.5], &[0.2, 0.3, 0.5]).unwrap().abs() < 1e-9);
    assert!((js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-6);
    assert!(matches!(js_divergence(&[1.0], &[0.5, 0.5]), Err(Error::Validation(_))));
    assert!(js_divergence(&[0.7, 0.7], &[0.5, 0.5]).is_err());
}

#[test]
fn relevance_examples() {
    assert_eq!(relevance(1.0, 0.0).unwrap(), 2.0);
    assert_eq!(relevance(0.0, 1.0).unwrap(), 0.0);
    assert!((relevance(0.8, 0.3).unwrap() - 1.5).abs() < 1e-15);
    assert!(relevance(1.2, 0.0).is_err());
    assert!(relevance(0.5, -0.1).is_err());
}

fn distribution() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 1..12).prop_map(|v| {
        let v: Vec<f64> = v.iter().map(|x| x + 1e-9).collect();
        let s: f64 = v.iter().sum();
        v.iter().map(|x| x / s).collect()
    })
}

proptest! {
    #[test]
    fn divergence_agrees_with_entropy_form((p, q) in (1usize..12).prop_flat_map(|n| {
        let d = prop::collection::vec(0.0f64..1.0, n).prop_map(|v| {
            let v: Vec<f64> = v.iter().map(|x| x + 1e-9).collect();
            let s: f64 = v.iter().sum();
            v.iter().map(|x| x / s).collect::<Vec<f64>>()
        });
        (d.clone(), d)
    })) {
        let a = js_divergence(&p, &q).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!((a - js_divergence(&q, &p).unwrap()).abs() < 1e-15);
        prop_assert!((a - entropy_js(&p, &q)).abs() < 1e-9);
    }

    #[test]
    fn self_divergence_is_zero(p in distribution()) {
        prop_assert!(js_divergence(&p, &p).unwrap() < 1e-12);
    }

    #[test]
    fn normalized_vector_sums_to_one(t in prop::collection::vec(0.0f64..=1.0, 1..5), c in prop::collection::vec(0.0f64..=1.0, 0..8)) {
        let n = normalize_probs(&probs(t, vec![c]));
        prop_assert!((n.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relevance_is_monotone(s1 in 0.0f64..=1.0, s2 in 0.0f64..=1.0, p in 0.0f64..=1.0) {
        let (lo, hi) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        prop_assume!(lo < hi);
        prop_assert!(relevance(lo, p).unwrap() < relevance(hi, p).unwrap());
        prop_assert!(relevance(p, hi).unwrap() < relevance(p, lo).unwrap());
    }
}

#[test]
fn default_similarity_bounds() {
    let sim = EmbeddingSimilarity::default();
    assert_eq!(sim.score("list all pets", "list all pets").unwrap(), 1.0);
    let a = sim.score("list all pets", "how old is the oldest student").unwrap();
    assert!((0.0..=1.0).contains(&a));
    assert_eq!(a, sim.score("how old is the oldest student", "list all pets").unwrap());
}

struct Constant(f64);

impl SimilarityProvider for Constant {
    fn score(&self, _: &str, _: &str) -> sqltrack::Result<f64> {
        Ok(self.0)
    }
}

fn flat_store(turns: usize) -> (HistorySchemaStore, HistoryQaStore) {
    let pets = catalog("pets_1");
    let mut schema = HistorySchemaStore::default();
    let mut qa = HistoryQaStore::default();
    for t in 1..=turns {
        schema.record(t, SchemaProbabilities::filled(&pets, 0.5)).unwrap();
        qa.record(t, &format!("question {t}"), "SELECT fname FROM student", &pets).unwrap();
    }
    (schema, qa)
}

#[test]
fn first_turn_has_no_base() {
    let (schema, qa) = flat_store(1);
    let w = ContextWindow::new(5).unwrap();
    assert_eq!(select_base_sql(&schema, &qa, &w, 1, "q", &Constant(1.0)).unwrap(), None);
    assert!(select_base_sql(&schema, &qa, &w, 0, "q", &Constant(1.0)).is_err());
}

#[test]
fn ties_go_to_the_latest_turn() {
    let (schema, qa) = flat_store(4);
    let mut w = ContextWindow::new(5).unwrap();
    for t in 1..4 {
        w.slide(t).unwrap();
    }
    let sel = select_base_sql(&schema, &qa, &w, 4, "q", &Constant(0.4)).unwrap().unwrap();
    assert_eq!(sel.turn, 3);
    assert!((sel.score - 1.4).abs() < 1e-12);
}

#[test]
fn invalid_sql_is_never_chosen() {
    let pets = catalog("pets_1");
    let mut schema = HistorySchemaStore::default();
    let mut qa = HistoryQaStore::default();
    let mut w = ContextWindow::new(5).unwrap();
    for t in 1..=3 {
        schema.record(t, SchemaProbabilities::filled(&pets, 0.5)).unwrap();
    }
    qa.record(1, "a", "SELECT nosuch FROM student", &pets).unwrap();
    qa.record(2, "b", "SELECT FROM", &pets).unwrap();
    w.slide(1).unwrap();
    w.slide(2).unwrap();
    assert!(!qa.get(1).unwrap().valid);
    assert_eq!(select_base_sql(&schema, &qa, &w, 3, "c", &Constant(1.0)).unwrap(), None);
}

#[test]
fn single_candidate_always_wins() {
    let (schema, qa) = flat_store(2);
    let mut w = ContextWindow::new(5).unwrap();
    w.slide(1).unwrap();
    let sel = select_base_sql(&schema, &qa, &w, 2, "q", &Constant(0.0)).unwrap().unwrap();
    assert_eq!((sel.turn, sel.sql.as_str()), (1, "SELECT fname FROM student"));
}

#[test]
fn fuzzed_histories_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for i in 0..300 {
        let h = random_history(&mut rng, &[2, 3, 1]);
        check_selection(&h, &OverlapSimilarity).unwrap_or_else(|e| panic!("history {i}: {e}"));
        check_selection(&h, &EmbeddingSimilarity::default()).unwrap_or_else(|e| panic!("history {i}: {e}"));
    }
}

#[test]
fn stores_are_append_only() {
    let (mut schema, mut qa) = flat_store(2);
    let pets = catalog("pets_1");
    assert!(schema.record(2, SchemaProbabilities::filled(&pets, 0.1)).is_err());
    assert!(qa.record(1, "x", "SELECT 1", &pets).is_err());
}

#[test]
fn history_round_trips_through_jsonl() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = random_history(&mut rng, &[3, 2]);
    let text = history_to_jsonl(&h.schema, &h.qa);
    assert_eq!(text.lines().count(), h.qa.entries().len());
    let (schema, qa) = history_from_jsonl(&text).unwrap();
    assert_eq!(qa, h.qa);
    for e in qa.entries() {
        assert_eq!(schema.get(e.turn), h.schema.get(e.turn));
    }
    assert!(matches!(history_from_jsonl("{not json"), Err(Error::Format { .. })));
}
