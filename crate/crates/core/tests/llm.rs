mod common;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde_json::{json, Value};
use sqltrack::llm::*;
use sqltrack::Error;

use common::{build_mini_databases, catalog};

/// Replays canned answers and records every request body.
#[derive(Default)]
struct Scripted {
    answers: Mutex<VecDeque<Result<Value, TransportFailure>>>,
    bodies: Mutex<Vec<Value>>,
}

impl Scripted {
    fn new(answers: Vec<Result<Value, TransportFailure>>) -> Arc<Self> {
        Arc::new(Self {
            answers: Mutex::new(answers.into()),
            bodies: Mutex::default(),
        })
    }

    fn prompts(&self) -> Vec<String> {
        self.bodies
            .lock()
            .unwrap()
            .iter()
            .map(|b| b["messages"][0]["content"].as_str().unwrap().to_string())
            .collect()
    }
}

impl Transport for Scripted {
    fn post_json(&self, _: &str, _: Option<&str>, body: &Value, _: Duration) -> Result<Value, TransportFailure> {
        self.bodies.lock().unwrap().push(body.clone());
        self.answers.lock().unwrap().pop_front().unwrap_or_else(|| {
            Err(TransportFailure {
                retryable: false,
                message: "script exhausted".into(),
            })
        })
    }
}

fn reply(text: &str) -> Result<Value, TransportFailure> {
    Ok(json!({"choices": [{"message": {"role": "assistant", "content": text}}]}))
}

fn busy() -> Result<Value, TransportFailure> {
    Err(TransportFailure {
        retryable: true,
        message: "HTTP 503".into(),
    })
}

fn online(cache: Option<&std::path::Path>) -> ChatClientConfig {
    ChatClientConfig {
        offline_stub: false,
        backoff_ms: 1,
        max_retries: 2,
        cache_dir: cache.map(Into::into),
        api_key_env: "SQLTRACK_TEST_NO_SUCH_KEY".into(),
        ..Default::default()
    }
}

#[test]
fn stub_is_deterministic_and_offline() {
    let a = ChatClient::new(ChatClientConfig::default());
    let b = ChatClient::new(ChatClientConfig::default());
    let samples = vec!["1".to_string()];
    let x = a.annotate_column("continents", "contid", "number", &samples).unwrap();
    assert_eq!(x, "number values like 1 for continents.contid");
    assert_eq!(x, b.annotate_column("continents", "contid", "number", &samples).unwrap());
    let cols = [ColumnDescription {
        name: "contid",
        ty: "number",
        annotation: &x,
    }];
    assert_eq!(a.annotate_table("car_makers", &cols).unwrap(), "car makers records with 1 columns");
    assert_eq!(a.network_calls() + b.network_calls(), 0);
}

#[test]
fn prompts_fill_the_template_slots() {
    let p = column_prompt("continents", "contid", "number", &["1".into(), "2".into()]);
    assert!(p.contains("You are a database schema designer"));
    assert!(p.contains("Table Name: continents\nColumn: contid\nType: number\nSample Values: "));
    assert!(p.contains('1') && p.contains('2'));
    let cols = [ColumnDescription {
        name: "contid",
        ty: "number",
        annotation: "numeric continent id",
    }];
    let t = table_prompt("continents", &cols);
    assert!(t.contains("You are a database schema expert"));
    assert!(t.contains("The table name is `continents'"));
    assert!(t.contains("generate a concise description for the table"));
    assert!(t.contains("contid"));
}

#[test]
fn answers_are_trimmed_to_one_line() {
    let t = Scripted::new(vec![reply("  numeric continent id \n")]);
    let c = ChatClient::with_transport(online(None), t.clone());
    assert_eq!(c.annotate_column("continents", "contid", "number", &[]).unwrap(), "numeric continent id");
    assert_eq!(t.prompts().len(), 1);
}

#[test]
fn cache_hit_makes_no_call() {
    let dir = tempfile::tempdir().unwrap();
    let t = Scripted::new(vec![reply("numeric continent id")]);
    let c = ChatClient::with_transport(online(Some(dir.path())), t.clone());
    let first = c.annotate_column("continents", "contid", "number", &["1".into()]).unwrap();
    let again = ChatClient::with_transport(online(Some(dir.path())), t.clone());
    let second = again.annotate_column("continents", "contid", "number", &["1".into()]).unwrap();
    assert_eq!(first, second);
    assert_eq!((c.network_calls(), again.network_calls()), (1, 0));

    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    let entry: Value = serde_json::from_str(&std::fs::read_to_string(&files[0]).unwrap()).unwrap();
    assert_eq!(entry["response"], "numeric continent id");
    assert!(entry["prompt_hash"].is_string() && entry["timestamp"].is_u64());
}

#[test]
fn cache_key_separates_models() {
    assert_ne!(DiskCache::key(&["u", "m1", "p"]), DiskCache::key(&["u", "m2", "p"]));
    assert_ne!(DiskCache::key(&["ab", "c"]), DiskCache::key(&["a", "bc"]));
    assert_eq!(DiskCache::key(&["u", "m", "p"]).len(), 64);
}

#[test]
fn retries_then_succeeds() {
    let t = Scripted::new(vec![busy(), busy(), reply("ok")]);
    let c = ChatClient::with_transport(online(None), t);
    assert_eq!(c.complete("prompt").unwrap(), "ok");
    assert_eq!(c.network_calls(), 3);
}

#[test]
fn retry_exhaustion_reports_attempts() {
    let t = Scripted::new(vec![busy(), busy(), busy(), busy()]);
    let c = ChatClient::with_transport(online(None), t);
    match c.annotate_table("t", &[]) {
        Err(Error::Transport { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn client_errors_are_not_retried() {
    let t = Scripted::new(vec![Err(TransportFailure {
        retryable: false,
        message: "HTTP 401".into(),
    })]);
    let c = ChatClient::with_transport(online(None), t);
    assert!(matches!(c.complete("p"), Err(Error::Transport { attempts: 1, .. })));
}

#[test]
fn empty_or_malformed_completions() {
    let t = Scripted::new(vec![reply("   "), Ok(json!({"choices": []}))]);
    let c = ChatClient::with_transport(online(None), t);
    assert!(matches!(c.complete("a"), Err(Error::Content(_))));
    assert!(matches!(c.complete("b"), Err(Error::Content(_))));
}

#[test]
fn oversized_prompt_is_a_request_error() {
    for offline in [true, false] {
        let cfg = ChatClientConfig {
            max_prompt_chars: 10,
            offline_stub: offline,
            ..Default::default()
        };
        let c = ChatClient::with_transport(cfg, Scripted::new(vec![]));
        assert!(matches!(c.complete("a prompt longer than ten"), Err(Error::Request(_))));
        assert_eq!(c.network_calls(), 0);
    }
}

#[test]
fn stub_completion_echoes_the_base_sql() {
    let c = ChatClient::new(ChatClientConfig::default());
    let prompt = "Base SQL: SELECT name FROM country\ndatabase schema: country : name\nquestion: q";
    let out = c.complete(prompt).unwrap();
    assert_eq!(out, c.complete(prompt).unwrap());
    assert_eq!(extract_sql(&out), "SELECT name FROM country");
}

#[test]
fn sql_extraction_from_completions() {
    assert_eq!(extract_sql("```sql\nSELECT 1 ;\n```"), "SELECT 1");
    assert_eq!(extract_sql("Here:\n```\nSELECT a FROM t\n``` done"), "SELECT a FROM t");
    assert_eq!(extract_sql("SELECT 2;"), "SELECT 2");
    assert_eq!(extract_sql("```sql\nSELECT 3 ;\n'''"), "SELECT 3");
}

#[test]
fn catalog_annotation_covers_every_item() {
    let pets = catalog("pets_1");
    let c = ChatClient::new(ChatClientConfig::default());
    let out = annotate_catalog(&c, &pets, None, 0).unwrap();
    let items = pets.tables.len() + pets.column_count();
    assert_eq!(out.records.len(), items);
    assert!(out.failures.is_empty());
    assert_eq!(out.records, annotate_catalog(&c, &pets, None, 0).unwrap().records);
}

#[test]
fn annotation_samples_come_from_the_database() {
    let dir = tempfile::tempdir().unwrap();
    build_mini_databases(dir.path());
    let pets = catalog("pets_1");
    let db = dir.path().join("pets_1/pets_1.sqlite");
    let c = ChatClient::new(ChatClientConfig::default());
    let out = annotate_catalog(&c, &pets, Some(&db), 0).unwrap();
    let text = serde_json::to_string(&out.records).unwrap();
    assert!(text.contains("values like"), "{text}");
}

#[test]
fn transport_failures_are_collected_per_item() {
    let pets = catalog("pets_1");
    let t = Scripted::new(vec![reply("student id"), busy(), busy(), busy()]);
    let c = ChatClient::with_transport(online(None), t);
    let out = annotate_catalog(&c, &pets, None, 0).unwrap();
    let items = pets.tables.len() + pets.column_count();
    assert_eq!(out.records.len() + out.failures.len(), items);
    assert!(!out.records.is_empty());
    assert!(out.failures.iter().all(|f| f.db_id == "pets_1" && !f.message.is_empty()));
}
