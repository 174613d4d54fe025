mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqltrack::catalog::SchemaCatalog;
use sqltrack::extraction::*;
use sqltrack::sese::SchemaProbabilities;

use common::{all_catalogs, catalog};

fn random_probs(rng: &mut ChaCha8Rng, cat: &SchemaCatalog) -> SchemaProbabilities {
    // coarse grid so ties actually happen
    let mut draw = || rng.gen_range(0..=10) as f64 / 10.0;
    SchemaProbabilities {
        tables: cat.tables.iter().map(|_| draw()).collect(),
        columns: cat.tables.iter().map(|t| t.columns.iter().map(|_| draw()).collect()).collect(),
        stars: cat.tables.iter().map(|_| draw()).collect(),
    }
}

/// Keep-if-≥s then sort, written as plain loops over index lists.
fn brute_filter(probs: &SchemaProbabilities, s: f64) -> Vec<(usize, Vec<usize>)> {
    let mut kept: Vec<(usize, Vec<usize>)> = Vec::new();
    for t in 0..probs.tables.len() {
        let mut cols: Vec<usize> = (0..probs.columns[t].len()).filter(|&c| probs.columns[t][c] >= s).collect();
        if probs.tables[t] < s && cols.is_empty() {
            continue;
        }
        // stable sort on descending probability keeps catalog order on ties
        cols.sort_by(|&a, &b| probs.columns[t][b].partial_cmp(&probs.columns[t][a]).unwrap());
        kept.push((t, cols));
    }
    kept.sort_by(|a, b| probs.tables[b.0].partial_cmp(&probs.tables[a.0]).unwrap());
    kept
}

fn shape(x: &ExtractedSchema) -> Vec<(usize, Vec<usize>)> {
    x.tables
        .iter()
        .map(|t| (t.table, t.columns.iter().map(|c| c.column).collect()))
        .collect()
}

#[test]
fn filter_matches_brute_force() {
    let cats = all_catalogs();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for i in 0..500 {
        let cat = &cats[i % cats.len()];
        let probs = random_probs(&mut rng, cat);
        let s = rng.gen_range(0..=10) as f64 / 10.0;
        let x = filter_and_rank(&probs, cat, s).unwrap();
        assert_eq!(shape(&x), brute_filter(&probs, s), "instance {i}, s = {s}");
    }
}

#[test]
fn all_ones_give_catalog_order() {
    let cat = catalog("car_1");
    let x = filter_and_rank(&SchemaProbabilities::filled(&cat, 1.0), &cat, 0.5).unwrap();
    let expected: Vec<(usize, Vec<usize>)> =
        cat.tables.iter().enumerate().map(|(t, d)| (t, (0..d.columns.len()).collect())).collect();
    assert_eq!(shape(&x), expected);
}

#[test]
fn threshold_drops_low_tables() {
    let cat = catalog("pets_1");
    let mut probs = SchemaProbabilities::filled(&cat, 0.0);
    probs.tables = vec![0.9, 0.4, 0.0];
    let x = filter_and_rank(&probs, &cat, 0.5).unwrap();
    assert_eq!(x.table_ids().collect::<Vec<_>>(), vec![0]);
}

#[test]
fn qualifying_column_keeps_its_table() {
    let cat = catalog("pets_1");
    let mut probs = SchemaProbabilities::filled(&cat, 0.0);
    probs.columns[2][1] = 0.7;
    let x = filter_and_rank(&probs, &cat, 0.5).unwrap();
    assert_eq!(shape(&x), vec![(2, vec![1])]);
}

#[test]
fn threshold_outside_unit_interval_is_rejected() {
    let cat = catalog("pets_1");
    let probs = SchemaProbabilities::filled(&cat, 0.5);
    assert!(filter_and_rank(&probs, &cat, 1.5).is_err());
    let mut short = probs.clone();
    short.tables.pop();
    assert!(filter_and_rank(&short, &cat, 0.5).is_err());
}

#[test]
fn star_goes_between_columns_by_probability() {
    let cat = catalog("pets_1");
    let mut probs = SchemaProbabilities::filled(&cat, 0.0);
    probs.tables[2] = 0.9;
    probs.columns[2] = vec![0.0, 0.9, 0.2, 0.0];
    probs.stars[2] = 0.6;
    let x = insert_star(&filter_and_rank(&probs, &cat, 0.1).unwrap(), &probs.stars, 0.1).unwrap();
    assert_eq!(serialize_extracted(&x, &cat), "pets : pettype , * , pet_age");
}

#[test]
fn zero_star_probabilities_change_nothing() {
    let cat = catalog("world_1");
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let probs = random_probs(&mut rng, &cat);
    let x = filter_and_rank(&probs, &cat, 0.3).unwrap();
    let zeros = vec![0.0; cat.tables.len()];
    assert_eq!(insert_star(&x, &zeros, 0.3).unwrap(), x);
    assert!(insert_star(&x, &[], 0.3).is_err() || x.is_empty());
}

#[test]
fn serialization_examples() {
    let cat = catalog("pets_1");
    assert_eq!(serialize_extracted(&ExtractedSchema::default(), &cat), "");
    assert_eq!(parse_extracted("", &cat).unwrap(), ExtractedSchema::default());

    let mut probs = SchemaProbabilities::filled(&cat, 0.0);
    probs.tables[0] = 0.8;
    probs.columns[0][0] = 0.9;
    probs.columns[0][2] = 0.6;
    let x = filter_and_rank(&probs, &cat, 0.5).unwrap();
    assert_eq!(serialize_extracted(&x, &cat), "student : stuid , fname");

    probs.tables[1] = 0.7;
    let x = filter_and_rank(&probs, &cat, 0.5).unwrap();
    let text = serialize_extracted(&x, &cat);
    assert_eq!(text, "student : stuid , fname | has_pet | FK : student.stuid = has_pet.stuid");
    assert_eq!(parse_extracted(&text, &cat).unwrap(), x.layout());
}

#[test]
fn malformed_text_is_rejected() {
    let cat = catalog("pets_1");
    for bad in [
        "nosuch",
        "student : nosuch",
        "student | student",
        "student : * , *",
        "student | has_pet",
        "FK : student.stuid = has_pet.stuid | student",
        "student | FK : student.stuid = has_pet.stuid",
    ] {
        assert!(parse_extracted(bad, &cat).is_err(), "{bad}");
    }
}

fn random_extraction(rng: &mut ChaCha8Rng, cat: &SchemaCatalog) -> ExtractedSchema {
    let probs = random_probs(rng, cat);
    let s = rng.gen_range(0..=10) as f64 / 10.0;
    insert_star(&filter_and_rank(&probs, cat, s).unwrap(), &probs.stars, s).unwrap()
}

#[test]
fn serialization_round_trips() {
    let cats = all_catalogs();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..200 {
        let cat = &cats[i % cats.len()];
        let x = random_extraction(&mut rng, cat);
        let text = serialize_extracted(&x, cat);
        assert_eq!(parse_extracted(&text, cat).unwrap(), x.layout(), "{text}");
    }
}

#[test]
fn distinct_layouts_serialize_differently() {
    let cat = catalog("car_1");
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut seen = std::collections::BTreeMap::new();
    for _ in 0..300 {
        let x = random_extraction(&mut rng, &cat).layout();
        let text = serialize_extracted(&x, &cat);
        if let Some(prev) = seen.insert(text.clone(), x.clone()) {
            assert_eq!(prev, x, "{text}");
        }
    }
}

proptest! {
    #[test]
    fn raising_the_threshold_never_adds_items(seed: u64, lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let cat = catalog("car_1");
        let probs = random_probs(&mut ChaCha8Rng::seed_from_u64(seed), &cat);
        let a = filter_and_rank(&probs, &cat, lo).unwrap();
        let b = filter_and_rank(&probs, &cat, hi).unwrap();
        for id in b.column_ids() {
            prop_assert!(a.column_ids().any(|x| x == id));
        }
        for t in b.table_ids() {
            prop_assert!(a.table_ids().any(|x| x == t));
        }
    }

    #[test]
    fn star_keeps_column_order(seed: u64, s in 0.0f64..=1.0) {
        let cat = catalog("world_1");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let probs = random_probs(&mut rng, &cat);
        let x = filter_and_rank(&probs, &cat, s).unwrap();
        let y = insert_star(&x, &probs.stars, s).unwrap();
        prop_assert_eq!(shape(&x), shape(&y));
        for t in &y.tables {
            if let Some(star) = &t.star {
                let p = star.prob.unwrap();
                prop_assert!(p >= s);
                prop_assert!(t.columns[..star.position].iter().all(|c| c.prob.unwrap() >= p));
                prop_assert!(t.columns[star.position..].iter().all(|c| c.prob.unwrap() < p));
            }
        }
    }
}
