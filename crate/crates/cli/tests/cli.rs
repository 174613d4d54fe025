use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mini_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data/mini")
}

/// Copies the bundled mini dataset and its config into a fresh directory.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["mini.toml", "tables.json", "interactions.json"] {
        std::fs::copy(mini_dir().join(f), dir.path().join(f)).unwrap();
    }
    dir
}

fn sqltrack(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqltrack"))
        .arg("--config")
        .arg(dir.join("mini.toml"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = sqltrack(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(dir: &Path, rel: &str) -> String {
    std::fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

/// Output with the workspace directory replaced, since configs are echoed
/// with resolved paths.
fn portable(dir: &Path, rel: &str) -> String {
    read(dir, rel).replace(dir.to_str().unwrap(), "<dir>")
}

/// A workspace with annotations in place, ready for `train`.
fn annotated() -> tempfile::TempDir {
    let dir = workspace();
    ok(dir.path(), &["annotate"]);
    dir
}

const RUN_OUTPUTS: [&str; 5] = [
    "out/corpus.jsonl",
    "out/traces.jsonl",
    "out/report.json",
    "out/report.txt",
    "out/run.manifest.json",
];

#[test]
fn full_flow_is_reproducible() {
    let a = workspace();
    let b = workspace();
    for dir in [a.path(), b.path()] {
        ok(dir, &["annotate"]);
        ok(dir, &["train"]);
        ok(dir, &["run"]);
    }
    for rel in ["out/annotations.json", "out/extractor.json", "out/train_log.jsonl"]
        .into_iter()
        .chain(RUN_OUTPUTS)
    {
        assert_eq!(portable(a.path(), rel), portable(b.path(), rel), "{rel}");
    }
    let first: Vec<String> = RUN_OUTPUTS.iter().map(|r| read(a.path(), r)).collect();
    // a second run in the same place overwrites with the same bytes
    ok(a.path(), &["run"]);
    for (rel, before) in RUN_OUTPUTS.iter().zip(&first) {
        assert_eq!(&read(a.path(), rel), before, "{rel}");
    }

    let golden = std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/mini_corpus.jsonl"),
    )
    .unwrap();
    assert_eq!(first[0], golden);

    let report = &first[3];
    assert!(report.starts_with("turns   27\nskipped 0\n"), "{report}");
    assert!(report.contains("TRS@0.1") && report.contains("CRS@0.5"));

    // one worker gives the same output as two
    let stdout = ok(a.path(), &["run", "--workers", "1"]);
    assert_eq!(read(a.path(), "out/corpus.jsonl"), first[0]);
    assert_eq!(stdout, *report);
}

#[test]
fn eval_label_and_inspect() {
    let dir = annotated();
    let d = dir.path();
    ok(d, &["train"]);
    ok(d, &["run"]);

    assert!(ok(d, &["label"]).contains("labeled 27 turns, skipped 0"));
    let labels = read(d, "out/labels.jsonl");
    assert_eq!(labels.lines().count(), 27);

    // gold SQL as predictions scores perfectly
    let preds: String = labels
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            serde_json::json!({"db_id": v["db_id"], "interaction": v["interaction"], "turn": v["turn"], "sql": v["sql"]})
                .to_string()
                + "\n"
        })
        .collect();
    std::fs::write(d.join("preds.jsonl"), &preds).unwrap();
    let (preds, traces) = (d.join("preds.jsonl"), d.join("out/traces.jsonl"));
    let table = ok(
        d,
        &["eval", "--predictions", preds.to_str().unwrap(), "--traces", traces.to_str().unwrap()],
    );
    assert!(table.contains("TRS@0.5"), "{table}");
    let report: serde_json::Value = serde_json::from_str(&read(d, "out/eval_report.json")).unwrap();
    assert_eq!(report["matches"]["qm_em"], 1.0);
    assert_eq!(report["matches"]["im_em"], 1.0);
    assert_eq!(report["redundancy"].as_array().unwrap().len(), 2);

    let first: serde_json::Value = serde_json::from_str(labels.lines().next().unwrap()).unwrap();
    let shown = ok(
        d,
        &["inspect", "--interaction", first["interaction"].as_str().unwrap(), "--turn", "1", "--db-id", first["db_id"].as_str().unwrap()],
    );
    assert!(shown.contains("--- input ---") && shown.contains("--- target ---"));
    let missing = sqltrack(d, &["inspect", "--interaction", "nosuch", "--turn", "1"]);
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn missing_annotations_are_reported() {
    let dir = workspace();
    let out = sqltrack(dir.path(), &["train"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run `annotate` first"));
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = workspace();
    let d = dir.path();
    let cfg = read(d, "mini.toml");
    std::fs::write(d.join("mini.toml"), cfg.clone() + "\nno_such_key = 1\n").unwrap();
    let out = sqltrack(d, &["label"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("configuration error"));

    std::fs::write(d.join("mini.toml"), cfg.replace("epochs = 60", "epochs = 0")).unwrap();
    assert_eq!(sqltrack(d, &["train"]).status.code(), Some(2));

    let missing_file = Command::new(env!("CARGO_BIN_EXE_sqltrack"))
        .args(["--config", d.join("nosuch.toml").to_str().unwrap(), "label"])
        .output()
        .unwrap();
    assert_eq!(missing_file.status.code(), Some(2));
}

#[test]
fn data_errors_exit_with_3() {
    let dir = annotated();
    let d = dir.path();
    std::fs::remove_file(d.join("interactions.json")).unwrap();
    let out = sqltrack(d, &["label"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));

    // run without a checkpoint
    let dir = annotated();
    assert_eq!(sqltrack(dir.path(), &["run"]).status.code(), Some(3));

    std::fs::write(dir.path().join("tables.json"), "[{").unwrap();
    assert_eq!(sqltrack(dir.path(), &["label"]).status.code(), Some(3));
}

#[test]
fn checkpoint_must_match_the_provider() {
    let dir = annotated();
    let d = dir.path();
    ok(d, &["train"]);
    let cfg = read(d, "mini.toml");
    std::fs::write(d.join("mini.toml"), cfg.replace("dim = 64", "dim = 32")).unwrap();
    let out = sqltrack(d, &["run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("provider"));
}
