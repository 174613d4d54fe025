mod common;

use std::collections::BTreeSet;

use common::oracle::{
    gradient_check, naive_focal, naive_gate, naive_head, naive_probability, random_grad_instance, random_item,
    random_params,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqltrack::catalog::{ColumnDef, ColumnId, ColumnType, SchemaCatalog, TableDef};
use sqltrack::embedding::HashEmbedder;
use sqltrack::sese::*;
use sqltrack::Error;

fn unit_vec(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

/// Gate whose sigmoid saturates at `g` for every coordinate.
fn saturated_gate(d: usize, high: bool) -> ExtractorParams {
    let mut p = ExtractorParams::zeros(d, 2);
    p.column_gate.bg = vec![if high { 800.0 } else { -800.0 }; d];
    p
}

#[test]
fn gate_one_keeps_the_item_direction() {
    let e = [0.3, -1.2, 0.5, 2.0];
    let e_hat = [1.0, 1.0, -1.0, 0.0];
    let (g, out) = enhance(&saturated_gate(4, true), &e, &e_hat, GateKind::Column).unwrap();
    assert!(g.iter().all(|x| *x == 1.0));
    assert!(close(&out, &unit_vec(&e), 1e-15));
}

#[test]
fn gate_zero_mixes_item_and_annotation() {
    let e = [0.3, -1.2, 0.5, 2.0];
    let e_hat = [1.0, 1.0, -1.0, 0.0];
    let (_, out) = enhance(&saturated_gate(4, false), &e, &e_hat, GateKind::Column).unwrap();
    let sum: Vec<f64> = e.iter().zip(&e_hat).map(|(a, b)| a + b).collect();
    assert!(close(&out, &unit_vec(&sum), 1e-15));
}

#[test]
fn gate_zero_input_gives_zero_output() {
    let p = saturated_gate(3, true);
    let (_, out) = enhance(&p, &[0.0; 3], &[0.5, 0.5, 0.5], GateKind::Column).unwrap();
    assert_eq!(out, vec![0.0; 3]);
}

#[test]
fn gate_rejects_non_finite_input() {
    let p = ExtractorParams::zeros(2, 2);
    let err = enhance(&p, &[f64::NAN, 0.0], &[0.0, 1.0], GateKind::Table).unwrap_err();
    assert!(matches!(err, Error::Numeric { .. }));
}

#[test]
fn gate_and_head_match_naive_evaluator() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let p = random_params(&mut rng, 4, 3, 1.0);
        let item = random_item(&mut rng, 4);
        let (_, out) = enhance(&p, &item.e, &item.e_hat, GateKind::Table).unwrap();
        assert!(close(&out, &naive_gate(&p.table_gate, &item.e, &item.e, &item.e_hat), 1e-12));
        let prob = classify(&p, &out, HeadKind::Star);
        assert!((prob - naive_head(&p.star_head, &out)).abs() < 1e-12);
        for head in [HeadKind::Table, HeadKind::Column, HeadKind::Star] {
            let a = item_probability(&p, &item, head).unwrap();
            assert!((a - naive_probability(&p, &item, head)).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_head_is_undecided() {
    let p = ExtractorParams::zeros(4, 3);
    assert_eq!(classify(&p, &[0.5, 0.5, 0.5, 0.5], HeadKind::Column), 0.5);
    let mut p = p;
    p.table_head.c2 = vec![7.5, 7.5];
    assert_eq!(classify(&p, &[1.0, 0.0, 0.0, 0.0], HeadKind::Table), 0.5);
}

#[test]
fn focal_point_values() {
    assert!((focal_loss(0.5, true, 0.0, 1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert!((focal_loss(0.5, false, 0.0, 0.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    assert!(focal_loss(1.0 - 1e-7, true, 2.0, 0.25).unwrap() < 1e-10);
    let expected = 0.25 * 0.1f64.powi(2) * -(0.9f64.ln());
    assert!((focal_loss(0.9, true, 2.0, 0.25).unwrap() - expected).abs() < 1e-15);
    assert!((expected - 2.634e-4).abs() < 1e-7);
}

#[test]
fn focal_rejects_negative_gamma() {
    assert!(matches!(focal_loss(0.5, true, -1.0, 0.5), Err(Error::Validation(_))));
}

proptest! {
    #[test]
    fn focal_matches_reference(p in 0.0f64..=1.0, y: bool, gamma in 0.0f64..5.0, alpha in 0.0f64..=1.0) {
        let a = focal_loss(p, y, gamma, alpha).unwrap();
        prop_assert!(a >= 0.0);
        prop_assert!((a - naive_focal(p, y, gamma, alpha)).abs() < 1e-12);
    }

    #[test]
    fn focal_is_cross_entropy_at_gamma_zero(p in 1e-6f64..(1.0 - 1e-6), y: bool) {
        let ce = -(if y { p } else { 1.0 - p }).ln();
        let alpha = if y { 1.0 } else { 0.0 };
        prop_assert!((focal_loss(p, y, 0.0, alpha).unwrap() - ce).abs() < 1e-12);
    }

    #[test]
    fn enhanced_norm_is_zero_or_one(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_params(&mut rng, 5, 2, 1.0);
        let item = random_item(&mut rng, 5);
        let (_, out) = enhance(&p, &item.e, &item.e_hat, GateKind::Column).unwrap();
        let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(n == 0.0 || (n - 1.0).abs() < 1e-12);
        let prob = classify(&p, &out, HeadKind::Column);
        prop_assert!(prob > 0.0 && prob < 1.0);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..10 {
        let inst = random_grad_instance(1000 + seed);
        let err = gradient_check(&inst, 1e-5);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn gradient_reduces_to_cross_entropy() {
    // γ = 0, unit α on negatives: dL/dl1 = p, dL/dl0 = -p for a single item.
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let params = random_params(&mut rng, 3, 2, 0.5);
    let mut item = random_item(&mut rng, 3);
    item.label = false;
    item.residual = None;
    let turn = TurnExample {
        tables: vec![item.clone()],
        ..Default::default()
    };
    let cfg = LossConfig {
        gamma: 0.0,
        alpha: 0.0,
        star_weight: 1.0,
    };
    let (loss, grads) = backward(&params, &[turn], &cfg).unwrap();
    let p = item_probability(&params, &item, HeadKind::Table).unwrap();
    assert!((loss + (1.0 - p).ln()).abs() < 1e-12);
    assert!((grads.table_head.c2[1] - p).abs() < 1e-12);
    assert!((grads.table_head.c2[0] + p).abs() < 1e-12);
}

#[test]
fn duplicated_batch_has_the_same_gradient() {
    let inst = random_grad_instance(77);
    let (l1, g1) = backward(&inst.params, &inst.turns, &inst.cfg).unwrap();
    let doubled: Vec<TurnExample> = inst.turns.iter().chain(&inst.turns).cloned().collect();
    let (l2, g2) = backward(&inst.params, &doubled, &inst.cfg).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for ((_, a), (_, b)) in g1.tensors().into_iter().zip(g2.tensors()) {
        assert!(close(a, b, 1e-12));
    }
}

#[test]
fn backward_loss_equals_batch_loss() {
    let inst = random_grad_instance(5);
    let (l, _) = backward(&inst.params, &inst.turns, &inst.cfg).unwrap();
    assert!((l - batch_loss(&inst.params, &inst.turns, &inst.cfg).unwrap()).abs() < 1e-12);
    assert!(backward(&inst.params, &[], &inst.cfg).is_err());
}

fn one_scalar(value: f64) -> ExtractorParams {
    let mut p = ExtractorParams::zeros(1, 1);
    p.tensors_mut()[0].1[0] = value;
    p
}

#[test]
fn adamw_first_step_closed_form() {
    let cfg = AdamWConfig {
        lr: 0.1,
        beta1: 0.9,
        beta2: 0.999,
        weight_decay: 0.01,
        eps: 1e-8,
    };
    let mut p = one_scalar(2.0);
    let g = one_scalar(0.5);
    let mut state = AdamWState::default();
    adamw_step(&mut p, &g, &mut state, &cfg);
    // m̂ = g, v̂ = g², so the step is lr · g / (|g| + eps) after the decay.
    let decayed = 2.0 - 0.1 * 0.01 * 2.0;
    let expected = decayed - 0.1 * 0.5 / (0.5 + 1e-8);
    assert!((p.tensors()[0].1[0] - expected).abs() < 1e-15);
    assert_eq!(state.step, 1);
}

#[test]
fn adamw_second_step_closed_form() {
    let cfg = AdamWConfig {
        lr: 0.01,
        weight_decay: 0.0,
        ..Default::default()
    };
    let mut p = one_scalar(1.0);
    let mut state = AdamWState::default();
    adamw_step(&mut p, &one_scalar(1.0), &mut state, &cfg);
    adamw_step(&mut p, &one_scalar(-2.0), &mut state, &cfg);
    let m = 0.9 * 0.1 + 0.1 * -2.0;
    let v = 0.999 * 0.001 + 0.001 * 4.0;
    let (mh, vh) = (m / (1.0 - 0.81), v / (1.0 - 0.999f64.powi(2)));
    let expected = 1.0 - 0.01 * (1.0 / (1.0 + 1e-8)) - 0.01 * mh / (vh.sqrt() + 1e-8);
    assert!((p.tensors()[0].1[0] - expected).abs() < 1e-14);
}

#[test]
fn adamw_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = random_params(&mut rng, 3, 2, 1.0);
    let zero = ExtractorParams::zeros(3, 2);
    let mut p = start.clone();
    let no_decay = AdamWConfig {
        weight_decay: 0.0,
        ..Default::default()
    };
    adamw_step(&mut p, &zero, &mut AdamWState::default(), &no_decay);
    assert_eq!(p, start);
    adamw_step(&mut p, &zero, &mut AdamWState::default(), &AdamWConfig::default());
    for ((_, a), (_, b)) in p.tensors().into_iter().zip(start.tensors()) {
        assert!(a.iter().zip(b).all(|(x, y)| x.abs() < y.abs() || *y == 0.0));
    }
}

// ---- segmentation and perturbation ---------------------------------------

fn catalog(widths: &[usize], annotated: bool) -> SchemaCatalog {
    let tables = widths
        .iter()
        .enumerate()
        .map(|(t, &w)| TableDef {
            name: format!("table_{t}"),
            annotation: annotated.then(|| format!("records of kind {t}")),
            columns: (0..w)
                .map(|c| ColumnDef {
                    name: format!("col_{c}"),
                    ty: ColumnType::Number,
                    annotation: annotated.then(|| format!("value {c} of table {t}")),
                })
                .collect(),
        })
        .collect();
    SchemaCatalog::new("synthetic", tables, vec![], vec![]).unwrap()
}

#[test]
fn small_catalog_is_one_segment() {
    let c = catalog(&[3, 2], true);
    let segs = segment_schema(&c, 5, 512).unwrap();
    assert_eq!(segs.len(), 1);
    assert_eq!(segs[0], c.column_ids().collect::<Vec<_>>());
}

#[test]
fn tight_budget_splits_into_disjoint_segments() {
    let c = catalog(&[5], false);
    // header 3 tokens ("table", "0", separator), each column 3 tokens
    let budget = 2 + 3 + 2 * 3;
    let segs = segment_schema(&c, 2, budget).unwrap();
    assert!(segs.len() >= 3);
    assert!(segs.iter().all(|s| s.len() <= 2));
    let flat: Vec<ColumnId> = segs.concat();
    assert_eq!(flat, c.column_ids().collect::<Vec<_>>());
}

#[test]
fn budget_too_small_is_a_config_error() {
    let c = catalog(&[2], true);
    assert!(matches!(segment_schema(&c, 10, 12), Err(Error::Config(_))));
}

proptest! {
    #[test]
    fn segments_partition_and_fit(
        widths in prop::collection::vec(0usize..7, 1..5),
        q_len in 0usize..20,
        slack in 1usize..60,
        annotated: bool,
    ) {
        let c = catalog(&widths, annotated);
        let longest = c.column_ids()
            .map(|id| table_header_tokens(&c, id.table) + column_tokens(&c, id))
            .max()
            .unwrap_or(0);
        let budget = q_len + longest + slack;
        let segs = segment_schema(&c, q_len, budget).unwrap();
        let flat: Vec<ColumnId> = segs.concat();
        prop_assert_eq!(flat, c.column_ids().collect::<Vec<_>>());
        for s in &segs {
            let tables: BTreeSet<usize> = s.iter().map(|id| id.table).collect();
            let cost: usize = q_len
                + tables.iter().map(|&t| table_header_tokens(&c, t)).sum::<usize>()
                + s.iter().map(|&id| column_tokens(&c, id)).sum::<usize>();
            prop_assert!(cost <= budget);
        }
    }

    #[test]
    fn perturbation_keeps_every_item(
        items in prop::collection::vec(0u32..1000, 0..12),
        pool in prop::collection::vec(1000u32..2000, 0..4),
        p in 0.0f64..=1.0,
        seed: u64,
    ) {
        let out = perturb_schema_items(&items, p, &pool, seed);
        let mut sorted_in = items.clone();
        sorted_in.sort_unstable();
        let mut own: Vec<u32> = out.iter().copied().filter(|x| *x < 1000).collect();
        own.sort_unstable();
        prop_assert_eq!(own, sorted_in);
        prop_assert!(out.len() <= items.len() + 1);
        prop_assert!(out.iter().filter(|x| **x >= 1000).all(|x| pool.contains(x)));
        prop_assert_eq!(&out, &perturb_schema_items(&items, p, &pool, seed));
    }
}

#[test]
fn perturbation_examples() {
    let items = vec![1, 2, 3, 4, 5];
    assert_eq!(perturb_schema_items(&items, 0.0, &[99], 3), items);
    let shuffled = perturb_schema_items(&items, 1.0, &[], 3);
    let mut s = shuffled.clone();
    s.sort_unstable();
    assert_eq!(s, items);
    let with = perturb_schema_items(&items, 1.0, &[99], 3);
    assert_eq!(with.len(), 6);
    assert!(with.contains(&99));
}

// ---- prediction and training ---------------------------------------------

fn questions(q: &[&str]) -> Vec<String> {
    q.iter().map(|s| s.to_string()).collect()
}

#[test]
fn prediction_shape_and_determinism() {
    let c = catalog(&[1], true);
    let provider = HashEmbedder::new(16, 0);
    let params = ExtractorParams::init(16, 4, 0);
    let cfg = TrainConfig::default();
    let q = questions(&["show the value"]);
    let a = predict_probs(&params, &provider, &q, &c, None, &cfg).unwrap();
    assert_eq!((a.tables.len(), a.columns[0].len(), a.stars.len()), (1, 1, 1));
    assert_eq!(a, predict_probs(&params, &provider, &q, &c, None, &cfg).unwrap());
    assert!(predict_probs(&params, &provider, &[], &c, None, &cfg).is_err());
    let wrong_width = HashEmbedder::new(8, 0);
    assert!(predict_probs(&params, &wrong_width, &q, &c, None, &cfg).is_err());
}

#[test]
fn segmentation_only_changes_table_scores_by_max() {
    let c = catalog(&[4, 3], true);
    let provider = HashEmbedder::new(16, 0);
    let params = ExtractorParams::init(16, 4, 9);
    let q = questions(&["value of table"]);
    let wide = TrainConfig::default();
    let narrow = TrainConfig {
        token_budget: 30,
        ..Default::default()
    };
    let a = predict_probs(&params, &provider, &q, &c, None, &wide).unwrap();
    let b = predict_probs(&params, &provider, &q, &c, None, &narrow).unwrap();
    assert!(segment_schema(&c, 3, 30).unwrap().len() > 1);
    // columns and per-table scores do not depend on the segment they sit in
    assert_eq!(a, b);
}

fn labeled(catalogs: &[SchemaCatalog]) -> Vec<sqltrack::dataset::LabeledTurn> {
    let corpus = sqltrack::synthetic::synthetic_corpus(5, 2, 12);
    let _ = catalogs;
    sqltrack::dataset::label_turns(&corpus.interactions, &corpus.catalogs).unwrap().turns
}

#[test]
fn single_sample_overfits() {
    let corpus = sqltrack::synthetic::synthetic_corpus(5, 2, 12);
    let turns = labeled(&corpus.catalogs);
    let provider = HashEmbedder::new(32, 0);
    let cfg = TrainConfig {
        epochs: 150,
        perturb_prob: 0.0,
        gamma: 0.0,
        alpha: 0.5,
        lr: 0.02,
        weight_decay: 0.0,
        omega: 8,
        ..Default::default()
    };
    let (_, log) = train(&turns[..1], &[], &corpus.catalogs, &provider, &cfg).unwrap();
    assert!(log.epochs.last().unwrap().loss < 1e-2, "{:?}", log.epochs.last());
}

#[test]
fn training_is_order_invariant_and_seeded() {
    let corpus = sqltrack::synthetic::synthetic_corpus(6, 2, 10);
    let turns = labeled(&corpus.catalogs);
    let provider = HashEmbedder::new(16, 0);
    let cfg = TrainConfig {
        epochs: 3,
        omega: 4,
        ..Default::default()
    };
    let (a, la) = train(&turns, &[], &corpus.catalogs, &provider, &cfg).unwrap();
    let mut reversed = turns.clone();
    reversed.reverse();
    let (b, lb) = train(&reversed, &[], &corpus.catalogs, &provider, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(la.to_jsonl(), lb.to_jsonl());
    let other = TrainConfig { seed: 7, ..cfg.clone() };
    let (c, _) = train(&turns, &[], &corpus.catalogs, &provider, &other).unwrap();
    assert_ne!(a, c);
    assert!(train(&[], &[], &corpus.catalogs, &provider, &cfg).is_err());
}

#[test]
fn training_log_has_held_out_f1() {
    let corpus = sqltrack::synthetic::synthetic_corpus(6, 2, 10);
    let turns = labeled(&corpus.catalogs);
    let provider = HashEmbedder::new(16, 0);
    let cfg = TrainConfig {
        epochs: 2,
        omega: 4,
        ..Default::default()
    };
    let (_, log) = train(&turns[..8], &turns[8..], &corpus.catalogs, &provider, &cfg).unwrap();
    assert_eq!(log.epochs.len(), 2);
    let line = log.to_jsonl().lines().next().unwrap().to_string();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    for key in ["epoch", "loss", "table_f1", "column_f1"] {
        assert!(v.get(key).is_some(), "{key} missing from {line}");
    }
    assert!(v["table_f1"].is_f64());
}

#[test]
fn invalid_config_is_rejected() {
    let corpus = sqltrack::synthetic::synthetic_corpus(6, 2, 4);
    let turns = labeled(&corpus.catalogs);
    let provider = HashEmbedder::new(16, 0);
    for bad in [
        TrainConfig { gamma: -1.0, ..Default::default() },
        TrainConfig { lr: 0.0, ..Default::default() },
        TrainConfig { perturb_prob: 1.5, ..Default::default() },
    ] {
        let err = train(&turns, &[], &corpus.catalogs, &provider, &bad).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    let provider = HashEmbedder::new(8, 3);
    let params = ExtractorParams::init(8, 2, 11);
    let ck = Checkpoint::new(params, TrainConfig::default(), &provider);
    ck.save(&path).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back, ck);

    let mut text: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    text["version"] = 99.into();
    std::fs::write(&path, text.to_string()).unwrap();
    assert!(matches!(Checkpoint::load(&path), Err(Error::Format { .. })));
}
