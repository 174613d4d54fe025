//! Chat-completions client for schema annotation, with a disk cache, retries
//! and an offline stub that needs no network.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::catalog::{sample_column_values, AnnotationRecord, SchemaCatalog};
use crate::error::{Error, Result};
use crate::template::{fill, COLUMN_PROMPT, TABLE_PROMPT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatClientConfig {
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on every further attempt.
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
    pub offline_stub: bool,
    pub max_prompt_chars: usize,
    pub max_concurrency: usize,
    pub temperature: f64,
}

impl Default for ChatClientConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-3.5-turbo".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 60,
            max_retries: 3,
            backoff_ms: 500,
            cache_dir: None,
            offline_stub: true,
            max_prompt_chars: 32_000,
            max_concurrency: 4,
            temperature: 0.0,
        }
    }
}

/// Why a single HTTP exchange failed.
#[derive(Clone, Debug)]
pub struct TransportFailure {
    /// Timeouts, connection resets, 429 and 5xx responses are retried.
    pub retryable: bool,
    pub message: String,
}

/// One JSON POST. Swappable so tests can count calls without a network.
pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<Value, TransportFailure>;
}

/// Blocking HTTP transport.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post_json(
        &self,
        url: &str,
        api_key: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> std::result::Result<Value, TransportFailure> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.post(url);
        if let Some(key) = api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| TransportFailure {
            retryable: true,
            message: e.to_string(),
        })?;
        let status = resp.status().as_u16();
        if status != 200 {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            return Err(TransportFailure {
                retryable: status == 429 || status >= 500,
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            });
        }
        resp.body_mut().read_json().map_err(|e| TransportFailure {
            retryable: false,
            message: format!("undecodable response: {e}"),
        })
    }
}

/// JSON files keyed by a SHA-256 hex digest. Writes go through a temp file
/// and a rename so concurrent readers never see partial entries.
#[derive(Clone, Debug)]
pub struct DiskCache {
    dir: PathBuf,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    prompt_hash: String,
    response: String,
    timestamp: u64,
}

impl DiskCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key(parts: &[&str]) -> String {
        let mut h = Sha256::new();
        for p in parts {
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
        }
        hex::encode(h.finalize())
    }

    fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let text = fs::read_to_string(self.path(key)).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        (entry.prompt_hash == key).then_some(entry.response)
    }

    pub fn put(&self, key: &str, response: &str) -> Result<()> {
        fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let entry = CacheEntry {
            prompt_hash: key.to_string(),
            response: response.to_string(),
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
        };
        let tmp = self.dir.join(format!(
            ".{key}.{}.{:?}.tmp",
            std::process::id(),
            std::thread::current().id()
        ));
        let body = serde_json::to_string(&entry).expect("cache entry serializes");
        fs::write(&tmp, body).map_err(|e| Error::io(&tmp, e))?;
        let dest = self.path(key);
        fs::rename(&tmp, &dest).map_err(|e| Error::io(&dest, e))
    }
}

struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Column summary used to fill the table-annotation prompt.
#[derive(Clone, Debug)]
pub struct ColumnDescription<'a> {
    pub name: &'a str,
    pub ty: &'a str,
    pub annotation: &'a str,
}

/// Renders the column-annotation prompt.
pub fn column_prompt(table: &str, column: &str, ty: &str, samples: &[String]) -> String {
    let values = samples.join(", ");
    fill(
        COLUMN_PROMPT,
        &[
            ("table_name", table),
            ("column_name", column),
            ("column_type", ty),
            ("values", &values),
        ],
    )
    .expect("column prompt slots")
}

/// Renders the table-annotation prompt; columns appear as `name (type): annotation`.
pub fn table_prompt(table: &str, columns: &[ColumnDescription<'_>]) -> String {
    let column_strs = columns
        .iter()
        .map(|c| format!("{} ({}): {}", c.name, c.ty, c.annotation))
        .collect::<Vec<_>>()
        .join(", ");
    fill(
        TABLE_PROMPT,
        &[("table_name", table), ("column_strs", &column_strs)],
    )
    .expect("table prompt slots")
}

pub struct ChatClient {
    config: ChatClientConfig,
    transport: Arc<dyn Transport>,
    cache: Option<DiskCache>,
    calls: AtomicUsize,
    gate: Semaphore,
}

impl ChatClient {
    pub fn new(config: ChatClientConfig) -> Self {
        Self::with_transport(config, Arc::new(HttpTransport))
    }

    pub fn with_transport(config: ChatClientConfig, transport: Arc<dyn Transport>) -> Self {
        let cache = config.cache_dir.clone().map(DiskCache::new);
        let gate = Semaphore {
            free: Mutex::new(config.max_concurrency.max(1)),
            cv: Condvar::new(),
        };
        Self {
            config,
            transport,
            cache,
            calls: AtomicUsize::new(0),
            gate,
        }
    }

    pub fn config(&self) -> &ChatClientConfig {
        &self.config
    }

    /// Number of transport calls made so far, retries included.
    pub fn network_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn annotate_column(
        &self,
        table: &str,
        column: &str,
        ty: &str,
        samples: &[String],
    ) -> Result<String> {
        if self.config.offline_stub {
            return Ok(match samples.first() {
                Some(first) => format!("{ty} values like {first} for {table}.{column}"),
                None => format!("{ty} values for {table}.{column}"),
            });
        }
        let prompt = column_prompt(table, column, ty, samples);
        single_line(&self.chat(&prompt)?)
    }

    pub fn annotate_table(&self, table: &str, columns: &[ColumnDescription<'_>]) -> Result<String> {
        if self.config.offline_stub {
            let words = table.replace('_', " ").to_lowercase();
            return Ok(format!("{words} records with {} columns", columns.len()));
        }
        let prompt = table_prompt(table, columns);
        single_line(&self.chat(&prompt)?)
    }

    /// Raw completion for an already rendered prompt. The stub answers with a
    /// fenced block holding the prompt's base SQL, or a full scan of the
    /// first schema table when the base SQL is empty.
    pub fn complete(&self, prompt: &str) -> Result<String> {
        self.check_size(prompt)?;
        if self.config.offline_stub {
            return Ok(format!("```\n{} ;\n```", stub_sql(prompt)));
        }
        self.chat(prompt)
    }

    fn check_size(&self, prompt: &str) -> Result<()> {
        let n = prompt.chars().count();
        if n > self.config.max_prompt_chars {
            return Err(Error::Request(format!(
                "prompt has {n} characters, limit is {}",
                self.config.max_prompt_chars
            )));
        }
        Ok(())
    }

    fn chat(&self, prompt: &str) -> Result<String> {
        self.check_size(prompt)?;
        let key = DiskCache::key(&[&self.config.base_url, &self.config.model, prompt]);
        if let Some(hit) = self.cache.as_ref().and_then(|c| c.get(&key)) {
            return Ok(hit);
        }
        let body = json!({
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let value = self.post_with_retries(&url, &body)?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Content("response has no choices[0].message.content".into()))?;
        if content.trim().is_empty() {
            return Err(Error::Content("empty completion".into()));
        }
        if let Some(cache) = &self.cache {
            cache.put(&key, content)?;
        }
        Ok(content.to_string())
    }

    pub(crate) fn post_with_retries(&self, url: &str, body: &Value) -> Result<Value> {
        let api_key = std::env::var(&self.config.api_key_env).ok();
        let timeout = Duration::from_secs(self.config.timeout_secs);
        let _permit = self.gate.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            self.calls.fetch_add(1, Ordering::SeqCst);
            match self
                .transport
                .post_json(url, api_key.as_deref(), body, timeout)
            {
                Ok(v) => return Ok(v),
                Err(f) if f.retryable && attempts <= self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << (attempts - 1).min(16));
                    std::thread::sleep(Duration::from_millis(delay));
                }
                Err(f) => {
                    return Err(Error::Transport {
                        attempts,
                        message: f.message,
                    })
                }
            }
        }
    }
}

/// Sample values drawn per column when a database file is available.
pub const ANNOTATION_SAMPLES: usize = 3;

/// An item whose annotation request failed; the rest of the catalog is
/// still annotated.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationFailure {
    pub db_id: String,
    pub table: String,
    pub column: Option<String>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationOutcome {
    pub records: Vec<AnnotationRecord>,
    pub failures: Vec<AnnotationFailure>,
}

/// Annotates every column, then every table from its column annotations.
/// Samples come from `db_path` when given. Transport and content errors
/// are collected per item; a table whose columns all failed is still tried
/// with the names it has.
pub fn annotate_catalog(
    client: &ChatClient,
    catalog: &SchemaCatalog,
    db_path: Option<&Path>,
    seed: u64,
) -> Result<AnnotationOutcome> {
    let mut out = AnnotationOutcome::default();
    let fail = |table: &str, column: Option<&str>, e: Error| AnnotationFailure {
        db_id: catalog.db_id.clone(),
        table: table.to_string(),
        column: column.map(str::to_string),
        message: e.to_string(),
    };
    for table in &catalog.tables {
        let mut described = Vec::with_capacity(table.columns.len());
        for col in &table.columns {
            let samples = match db_path {
                Some(p) => sample_column_values(p, &table.name, &col.name, ANNOTATION_SAMPLES, seed)?,
                None => Vec::new(),
            };
            match client.annotate_column(&table.name, &col.name, col.ty.as_str(), &samples) {
                Ok(text) => {
                    out.records.push(AnnotationRecord {
                        db_id: catalog.db_id.clone(),
                        table: table.name.clone(),
                        column: Some(col.name.clone()),
                        annotation: text.clone(),
                    });
                    described.push((col, text));
                }
                Err(e @ (Error::Transport { .. } | Error::Content(_) | Error::Request(_))) => {
                    out.failures.push(fail(&table.name, Some(&col.name), e));
                    described.push((col, col.name.clone()));
                }
                Err(e) => return Err(e),
            }
        }
        let columns: Vec<ColumnDescription<'_>> = described
            .iter()
            .map(|(c, a)| ColumnDescription {
                name: &c.name,
                ty: c.ty.as_str(),
                annotation: a,
            })
            .collect();
        match client.annotate_table(&table.name, &columns) {
            Ok(text) => out.records.push(AnnotationRecord {
                db_id: catalog.db_id.clone(),
                table: table.name.clone(),
                column: None,
                annotation: text,
            }),
            Err(e @ (Error::Transport { .. } | Error::Content(_) | Error::Request(_))) => {
                out.failures.push(fail(&table.name, None, e))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn single_line(text: &str) -> Result<String> {
    let line = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let line = line.trim_matches(|c| c == '"' || c == '\'').trim().to_string();
    if line.is_empty() {
        return Err(Error::Content("empty completion".into()));
    }
    Ok(line)
}

fn stub_sql(prompt: &str) -> String {
    let slot = |prefix: &str| {
        prompt
            .lines()
            .find_map(|l| l.strip_prefix(prefix))
            .map(str::trim)
            .unwrap_or("")
    };
    let base = slot("Base SQL:");
    if !base.is_empty() {
        return base.to_string();
    }
    let schema = slot("database schema:");
    let first = schema
        .split(['|', ':'])
        .next()
        .map(str::trim)
        .filter(|t| !t.is_empty() && !t.eq_ignore_ascii_case("fk"));
    match first {
        Some(t) => format!("SELECT * FROM {t}"),
        None => "SELECT 1".to_string(),
    }
}

/// Pulls the SQL out of a completion: the first fenced block if there is
/// one, otherwise the whole text; a trailing `;` is dropped.
pub fn extract_sql(completion: &str) -> String {
    let body = match completion.find("```") {
        Some(start) => {
            let after = &completion[start + 3..];
            let after = after.strip_prefix("sql").unwrap_or(after);
            let end = after.find("```").or_else(|| after.find("'''")).unwrap_or(after.len());
            &after[..end]
        }
        None => completion,
    };
    body.trim().trim_end_matches(';').trim().to_string()
}

