#![allow(dead_code)]

pub mod oracle;

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sqltrack::catalog::{annotation_map, load_catalogs, SchemaCatalog};
use sqltrack::dataset::{label_turns, load_interactions, Interaction, LabeledTurn};
use sqltrack::llm::{annotate_catalog, ChatClient, ChatClientConfig};

pub fn manifest_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(rel)
}

/// Mini-dataset catalogs followed by the extra fixture catalogs.
pub fn all_catalogs() -> Vec<SchemaCatalog> {
    let mut out = load_catalogs(manifest_path("data/mini/tables.json")).unwrap();
    out.extend(load_catalogs(manifest_path("tests/fixtures/extra_tables.json")).unwrap());
    out
}

pub fn catalog(db_id: &str) -> SchemaCatalog {
    all_catalogs()
        .into_iter()
        .find(|c| c.db_id == db_id)
        .unwrap_or_else(|| panic!("no fixture catalog {db_id}"))
}

#[derive(Deserialize, Clone, Debug)]
pub struct CaseSql {
    pub case: u32,
    pub db_id: String,
    pub role: String,
    pub sql: String,
}

pub fn case_study() -> Vec<CaseSql> {
    let text = std::fs::read_to_string(manifest_path("tests/fixtures/case_study.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn case_sql(case: u32, role: &str) -> CaseSql {
    case_study()
        .into_iter()
        .find(|c| c.case == case && c.role == role)
        .unwrap()
}

pub fn mini_catalogs() -> Vec<SchemaCatalog> {
    load_catalogs(manifest_path("data/mini/tables.json")).unwrap()
}

/// Mini catalogs with stub annotations attached.
pub fn annotated_mini_catalogs() -> Vec<SchemaCatalog> {
    let client = ChatClient::new(ChatClientConfig::default());
    mini_catalogs()
        .into_iter()
        .map(|c| {
            let out = annotate_catalog(&client, &c, None, 0).unwrap();
            assert!(out.failures.is_empty());
            c.attach_annotations(&annotation_map(&c.db_id, &out.records)).unwrap()
        })
        .collect()
}

pub fn mini_interactions(catalogs: &[SchemaCatalog]) -> Vec<Interaction> {
    load_interactions(manifest_path("data/mini/interactions.json"), catalogs).unwrap()
}

pub fn mini_turns(catalogs: &[SchemaCatalog]) -> Vec<LabeledTurn> {
    let labeled = label_turns(&mini_interactions(catalogs), catalogs).unwrap();
    assert!(labeled.skipped.is_empty(), "{:?}", labeled.skipped);
    labeled.turns
}

/// Builds `<root>/<db_id>/<db_id>.sqlite` for every mini database from the
/// seed scripts.
pub fn build_mini_databases(root: &Path) {
    for db in ["pets_1", "car_1", "world_1"] {
        let dir = root.join(db);
        std::fs::create_dir_all(&dir).unwrap();
        let script = std::fs::read_to_string(manifest_path(&format!("data/mini/seed/{db}.sql"))).unwrap();
        let conn = rusqlite::Connection::open(dir.join(format!("{db}.sqlite"))).unwrap();
        conn.execute_batch(&script).unwrap();
    }
}

/// Hand-labelled exact-match pairs: values ignored, clause items compared as
/// sets, aliases resolved.
#[derive(Deserialize, Clone, Debug)]
pub struct EmPair {
    pub db_id: String,
    pub a: String,
    pub b: String,
    pub equal: bool,
}

pub fn em_pairs() -> Vec<EmPair> {
    let text = std::fs::read_to_string(manifest_path("tests/fixtures/em_pairs.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Model settings of the bundled `mini.toml`.
pub fn mini_model() -> sqltrack::sese::TrainConfig {
    sqltrack::sese::TrainConfig {
        epochs: 60,
        omega: 16,
        seed: 42,
        ..Default::default()
    }
}

pub fn mini_provider() -> sqltrack::embedding::HashEmbedder {
    sqltrack::embedding::HashEmbedder::new(64, 0)
}

/// Trains on all but the trailing fifth of the interactions, as `train`
/// does with the bundled config.
pub fn mini_trained(catalogs: &[SchemaCatalog], turns: &[LabeledTurn]) -> sqltrack::sese::ExtractorParams {
    let mut ids: Vec<(&str, &str)> = Vec::new();
    for t in turns {
        let key = (t.db_id.as_str(), t.interaction.as_str());
        if ids.last() != Some(&key) {
            ids.push(key);
        }
    }
    let held = (ids.len() as f64 * 0.2).round() as usize;
    let held_ids = &ids[ids.len() - held..];
    let (train, test): (Vec<LabeledTurn>, Vec<LabeledTurn>) = turns
        .iter()
        .cloned()
        .partition(|t| !held_ids.contains(&(t.db_id.as_str(), t.interaction.as_str())));
    sqltrack::sese::train(&train, &test, catalogs, &mini_provider(), &mini_model()).unwrap().0
}

/// Compares `actual` with a fixture file, or rewrites the fixture when
/// `SQLTRACK_BLESS` is set.
pub fn assert_golden(rel: &str, actual: &str) {
    let path = manifest_path(rel);
    if std::env::var_os("SQLTRACK_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    if expected != actual {
        let line = expected.lines().zip(actual.lines()).position(|(a, b)| a != b);
        panic!("{} differs from output (first differing line {line:?})", path.display());
    }
}

/// Runs the pipeline over the mini dataset the way the bundled config does:
/// default window, gold history, stub generator.
pub fn run_mini(
    catalogs: &[SchemaCatalog],
    turns: &[LabeledTurn],
    params: &sqltrack::sese::ExtractorParams,
) -> sqltrack::Result<Vec<sqltrack::pipeline::TurnTrace>> {
    let provider = mini_provider();
    let similarity = sqltrack::context::EmbeddingSimilarity::default();
    let generator = ChatClient::new(ChatClientConfig::default());
    let model = mini_model();
    let config = sqltrack::pipeline::PipelineConfig::default();
    let pipeline = sqltrack::pipeline::Pipeline {
        params,
        provider: &provider,
        similarity: &similarity,
        catalogs,
        model: &model,
        config: &config,
        generator: Some(&generator),
    };
    pipeline.run(turns)
}

pub const MINI_CORPUS_GOLDEN: &str = "tests/fixtures/mini_corpus.jsonl";
