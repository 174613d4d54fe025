use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sqltrack::catalog::{annotation_map, load_catalogs, AnnotationRecord, SchemaCatalog};
use sqltrack::context::EmbeddingSimilarity;
use sqltrack::corpus::corpus_to_jsonl;
use sqltrack::dataset::{label_turns, load_interactions, LabeledDataset, LabeledTurn};
use sqltrack::llm::{annotate_catalog, AnnotationFailure, ChatClient};
use sqltrack::metrics::{QueryExecutor, RedundancyReport, SqliteExecutor};
use sqltrack::pipeline::{
    evaluate_predictions, group_interactions, redundancy_at, summarize, Pipeline, Prediction, RunReport,
    TurnTrace, REPORT_THRESHOLDS,
};
use sqltrack::sese::{train as train_extractor, Checkpoint, TrainConfig};
use sqltrack::Error;

use crate::config::RunConfig;
use crate::CliError;

fn write(path: &Path, content: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    std::fs::write(path, content).map_err(|e| io(path, e))
}

fn io(path: &Path, source: std::io::Error) -> CliError {
    CliError::Core(Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| io(path, e))
}

fn pretty<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("artifact serializes") + "\n"
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    items
        .iter()
        .map(|i| serde_json::to_string(i).expect("artifact serializes") + "\n")
        .collect()
}

/// Sidecar recording the command, the resolved configuration and the files
/// it wrote. Line-oriented artifacts carry their config echo here.
fn write_manifest(cfg: &RunConfig, command: &str, artifacts: &[&str]) -> Result<(), CliError> {
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
        "artifacts": artifacts,
    });
    write(&cfg.paths.output.join(format!("{command}.manifest.json")), &pretty(&manifest))
}

#[derive(Serialize, Deserialize)]
struct AnnotationFile {
    config: serde_json::Value,
    records: Vec<AnnotationRecord>,
    failures: Vec<AnnotationFailure>,
}

fn database_path(cfg: &RunConfig, db_id: &str) -> Option<PathBuf> {
    let root = cfg.paths.databases.as_ref()?;
    let p = SqliteExecutor::new(root).database_path(db_id);
    p.exists().then_some(p)
}

/// Catalogs with annotations attached when an annotations file is configured.
/// A configured file that does not exist yet is an error rather than being
/// skipped, so a model is never silently trained without annotations.
fn catalogs(cfg: &RunConfig) -> Result<Vec<SchemaCatalog>, CliError> {
    let raw = load_catalogs(&cfg.paths.catalogs)?;
    let Some(path) = &cfg.paths.annotations else {
        return Ok(raw);
    };
    if !path.exists() {
        return Err(Error::Validation(format!(
            "annotations file {} does not exist; run `annotate` first or unset paths.annotations",
            path.display()
        ))
        .into());
    }
    let text = read(path)?;
    let file: AnnotationFile = serde_json::from_str(&text).map_err(|e| Error::Format {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(raw
        .iter()
        .map(|c| c.attach_annotations(&annotation_map(&c.db_id, &file.records)))
        .collect::<sqltrack::Result<_>>()?)
}

fn labeled(cfg: &RunConfig, catalogs: &[SchemaCatalog]) -> Result<LabeledDataset, CliError> {
    let interactions = load_interactions(&cfg.paths.interactions, catalogs)?;
    let data = label_turns(&interactions, catalogs)?;
    for s in &data.skipped {
        eprintln!("skipped {}/{} turn {}: {}", s.db_id, s.interaction, s.turn, s.reason);
    }
    Ok(data)
}

pub fn annotate(cfg: &RunConfig) -> Result<(), CliError> {
    let client = ChatClient::new(cfg.llm.clone());
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for c in load_catalogs(&cfg.paths.catalogs)? {
        let db = database_path(cfg, &c.db_id);
        let out = annotate_catalog(&client, &c, db.as_deref(), cfg.seed)?;
        records.extend(out.records);
        failures.extend(out.failures);
    }
    for f in &failures {
        let item = f.column.as_ref().map_or(f.table.clone(), |c| format!("{}.{c}", f.table));
        eprintln!("annotation failed for {}/{item}: {}", f.db_id, f.message);
    }
    let file = AnnotationFile {
        config: serde_json::to_value(cfg).expect("config serializes"),
        records,
        failures,
    };
    write(&cfg.paths.output.join("annotations.json"), &pretty(&file))?;
    write_manifest(cfg, "annotate", &["annotations.json"])?;
    eprintln!(
        "annotated {} items, {} failures",
        file.records.len(),
        file.failures.len()
    );
    Ok(())
}

fn split_held_out(turns: Vec<LabeledTurn>, fraction: f64) -> (Vec<LabeledTurn>, Vec<LabeledTurn>) {
    let mut ids: Vec<(String, String)> = Vec::new();
    for t in &turns {
        let key = (t.db_id.clone(), t.interaction.clone());
        if ids.last() != Some(&key) {
            ids.push(key);
        }
    }
    let held = (ids.len() as f64 * fraction).round() as usize;
    let held_ids = &ids[ids.len() - held..];
    turns
        .into_iter()
        .partition(|t| !held_ids.iter().any(|(d, i)| *d == t.db_id && *i == t.interaction))
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let catalogs = catalogs(cfg)?;
    let data = labeled(cfg, &catalogs)?;
    let (train_turns, held) = split_held_out(data.turns, cfg.held_out_fraction);
    let provider = cfg.provider();
    let (params, log) = train_extractor(&train_turns, &held, &catalogs, provider.as_ref(), &cfg.model)?;
    if let Some(dir) = cfg.paths.checkpoint.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    }
    Checkpoint::new(params, cfg.model.clone(), provider.as_ref()).save(&cfg.paths.checkpoint)?;
    write(&cfg.paths.output.join("train_log.jsonl"), &log.to_jsonl())?;
    write_manifest(cfg, "train", &["train_log.jsonl"])?;
    if let Some(last) = log.epochs.last() {
        eprintln!(
            "trained {} epochs on {} turns ({} held out), final loss {:.6}",
            last.epoch,
            train_turns.len(),
            held.len(),
            last.loss
        );
    }
    Ok(())
}

struct Loaded {
    catalogs: Vec<SchemaCatalog>,
    data: LabeledDataset,
    checkpoint: Checkpoint,
    model: TrainConfig,
}

fn load_for_inference(cfg: &RunConfig) -> Result<Loaded, CliError> {
    let catalogs = catalogs(cfg)?;
    let data = labeled(cfg, &catalogs)?;
    let checkpoint = Checkpoint::load(&cfg.paths.checkpoint)?;
    let provider = cfg.provider();
    if checkpoint.provider != provider.id() {
        return Err(CliError::Config(format!(
            "checkpoint was trained with provider `{}`, configured provider is `{}`",
            checkpoint.provider,
            provider.id()
        )));
    }
    // Inference keeps the trained segmentation settings; only s is taken
    // from the run configuration.
    let mut model = checkpoint.config.clone();
    model.threshold_s = cfg.model.threshold_s;
    Ok(Loaded {
        catalogs,
        data,
        checkpoint,
        model,
    })
}

fn run_traces(cfg: &RunConfig, loaded: &Loaded, turns: &[LabeledTurn]) -> Result<Vec<TurnTrace>, CliError> {
    let provider = cfg.provider();
    let similarity = EmbeddingSimilarity::default();
    let generator = cfg.generator.then(|| ChatClient::new(cfg.llm.clone()));
    let pipeline = Pipeline {
        params: &loaded.checkpoint.params,
        provider: provider.as_ref(),
        similarity: &similarity,
        catalogs: &loaded.catalogs,
        model: &loaded.model,
        config: &cfg.pipeline,
        generator: generator.as_ref(),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    let groups = group_interactions(turns);
    // Results come back in input order, so output does not depend on scheduling.
    let results: Vec<_> = pool.install(|| groups.par_iter().map(|g| pipeline.run_interaction(g)).collect());
    let mut traces = Vec::with_capacity(turns.len());
    for r in results {
        traces.extend(r?);
    }
    Ok(traces)
}

fn redundancy_lines(reports: &[RedundancyReport]) -> String {
    let mut s = String::new();
    for r in reports {
        let _ = writeln!(s, "TRS@{}  {:.2}\nCRS@{}  {:.2}", r.s, r.trs, r.s, r.crs);
    }
    s
}

fn executor(cfg: &RunConfig) -> Option<SqliteExecutor> {
    cfg.paths.databases.as_ref().map(SqliteExecutor::new)
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let loaded = load_for_inference(cfg)?;
    let traces = run_traces(cfg, &loaded, &loaded.data.turns)?;
    let exec = executor(cfg);
    let report = summarize(
        &traces,
        &loaded.data.skipped,
        &loaded.catalogs,
        exec.as_ref().map(|e| e as &dyn QueryExecutor),
    )?;
    let examples: Vec<_> = traces.iter().map(|t| t.example.clone()).collect();
    let out = &cfg.paths.output;
    write(&out.join("corpus.jsonl"), &corpus_to_jsonl(&examples))?;
    write(&out.join("traces.jsonl"), &jsonl(&traces))?;
    write(&out.join("report.json"), &pretty(&json!({"config": cfg, "report": report})))?;
    let text = report_text(&report);
    write(&out.join("report.txt"), &text)?;
    write_manifest(cfg, "run", &["corpus.jsonl", "traces.jsonl", "report.json", "report.txt"])?;
    print!("{text}");
    Ok(())
}

fn report_text(report: &RunReport) -> String {
    let mut s = format!("turns   {}\nskipped {}\n", report.turns, report.skipped.len());
    s += &redundancy_lines(&report.redundancy);
    for (d, n) in &report.corpus.by_difficulty {
        let _ = writeln!(s, "{d:<7} {n}");
    }
    if let Some(m) = &report.matches {
        s += &m.to_table();
    }
    s
}

pub fn eval(cfg: &RunConfig, predictions: &Path, traces: Option<&Path>) -> Result<(), CliError> {
    let catalogs = catalogs(cfg)?;
    let data = labeled(cfg, &catalogs)?;
    let parse_lines = |path: &Path| -> Result<Vec<serde_json::Value>, CliError> {
        read(path)?
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| {
                    CliError::Core(Error::Format {
                        context: format!("{} line {}", path.display(), i + 1),
                        message: e.to_string(),
                    })
                })
            })
            .collect()
    };
    let preds: Vec<Prediction> = parse_lines(predictions)?
        .into_iter()
        .map(|v| serde_json::from_value(v).map_err(|e| Error::Validation(format!("bad prediction: {e}"))))
        .collect::<sqltrack::Result<_>>()?;
    let exec = executor(cfg);
    let matches = evaluate_predictions(
        &data.turns,
        &preds,
        &catalogs,
        exec.as_ref().map(|e| e as &dyn QueryExecutor),
    )?;
    let redundancy = match traces {
        Some(p) => {
            let traces: Vec<TurnTrace> = parse_lines(p)?
                .into_iter()
                .map(|v| serde_json::from_value(v).map_err(|e| Error::Validation(format!("bad trace: {e}"))))
                .collect::<sqltrack::Result<_>>()?;
            REPORT_THRESHOLDS
                .iter()
                .map(|&s| redundancy_at(&traces, &catalogs, s))
                .collect::<sqltrack::Result<Vec<_>>>()?
        }
        None => Vec::new(),
    };
    let out = &cfg.paths.output;
    write(
        &out.join("eval_report.json"),
        &pretty(&json!({"config": cfg, "matches": matches, "redundancy": redundancy})),
    )?;
    write_manifest(cfg, "eval", &["eval_report.json"])?;
    print!("{}{}", matches.to_table(), redundancy_lines(&redundancy));
    Ok(())
}

pub fn label(cfg: &RunConfig) -> Result<(), CliError> {
    let catalogs = catalogs(cfg)?;
    let data = labeled(cfg, &catalogs)?;
    let out = &cfg.paths.output;
    write(&out.join("labels.jsonl"), &jsonl(&data.turns))?;
    write(&out.join("skipped.jsonl"), &jsonl(&data.skipped))?;
    write_manifest(cfg, "label", &["labels.jsonl", "skipped.jsonl"])?;
    println!("labeled {} turns, skipped {}", data.turns.len(), data.skipped.len());
    Ok(())
}

pub fn inspect(cfg: &RunConfig, interaction: &str, turn: usize, db_id: Option<&str>) -> Result<(), CliError> {
    let loaded = load_for_inference(cfg)?;
    let turns: Vec<LabeledTurn> = loaded
        .data
        .turns
        .iter()
        .filter(|t| t.interaction == interaction && db_id.is_none_or(|d| t.db_id == d))
        .cloned()
        .collect();
    if turns.iter().map(|t| &t.db_id).collect::<std::collections::BTreeSet<_>>().len() > 1 {
        return Err(Error::Validation(format!("interaction `{interaction}` exists in several databases; pass --db-id")).into());
    }
    let traces = run_traces(cfg, &loaded, &turns)?;
    let trace = traces
        .into_iter()
        .find(|t| t.turn == turn)
        .ok_or_else(|| Error::Validation(format!("no labeled turn {turn} in interaction `{interaction}`")))?;
    println!("{}", pretty(&trace).trim_end());
    println!("\n--- input ---\n{}\n--- target ---\n{}", trace.example.input, trace.example.target);
    Ok(())
}
