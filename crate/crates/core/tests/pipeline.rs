mod common;

use sqltrack::context::EmbeddingSimilarity;
use sqltrack::corpus::{corpus_to_jsonl, DEFAULT_TERMINATOR};
use sqltrack::llm::{ChatClient, ChatClientConfig};
use sqltrack::pipeline::*;
use sqltrack::sese::ExtractorParams;
use sqltrack::Error;

use common::{
    annotated_mini_catalogs, assert_golden, mini_model, mini_provider, mini_trained, mini_turns, run_mini,
    MINI_CORPUS_GOLDEN,
};

#[test]
fn mini_run_matches_golden_corpus() {
    let cats = annotated_mini_catalogs();
    let turns = mini_turns(&cats);
    let params = mini_trained(&cats, &turns);
    let traces = run_mini(&cats, &turns, &params).unwrap();
    assert_eq!(traces.len(), 27);
    assert_eq!(group_interactions(&turns).len(), 10);
    for t in &traces {
        assert_eq!(t.base.is_none(), t.turn == 1, "{}/{} turn {}", t.db_id, t.interaction, t.turn);
        assert!(t.example.input.contains("You are a SQL query generator that converts multi-turn questions"));
        assert!(t.example.target.ends_with(&format!(" ;\n```\n{DEFAULT_TERMINATOR}")));
        assert!(t.predicted_sql.is_some());
        if let Some(b) = &t.base {
            assert!(b.turn < t.turn && b.turn + 5 >= t.turn);
        }
    }
    let examples: Vec<_> = traces.iter().map(|t| t.example.clone()).collect();
    assert_golden(MINI_CORPUS_GOLDEN, &corpus_to_jsonl(&examples));

    // a turn asking for everything about a table gets `*` for that table
    let star = traces.iter().find(|t| t.interaction == "c01" && t.turn == 2).unwrap();
    assert!(star.schema_text.starts_with("countries : *"), "{}", star.schema_text);

    let report = summarize(&traces, &[], &cats, None).unwrap();
    assert_eq!(report.redundancy.iter().map(|r| r.s).collect::<Vec<_>>(), REPORT_THRESHOLDS);
    assert_eq!(report.corpus.by_difficulty.values().sum::<usize>(), 27);
    let m = report.matches.unwrap();
    assert_eq!(m.qm_ex, None);
    assert!(m.im_em <= m.qm_em);
}

#[test]
fn emit_corpus_writes_one_line_per_turn() {
    let cats = annotated_mini_catalogs();
    let turns = mini_turns(&cats);
    let params = ExtractorParams::init(64, 16, 1);
    let provider = mini_provider();
    let similarity = EmbeddingSimilarity::default();
    let model = mini_model();
    let config = PipelineConfig::default();
    let pipeline = Pipeline {
        params: &params,
        provider: &provider,
        similarity: &similarity,
        catalogs: &cats,
        model: &model,
        config: &config,
        generator: None,
    };
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    let summary = emit_corpus(&pipeline, &turns, &a).unwrap();
    emit_corpus(&pipeline, &turns, &b).unwrap();
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 27);
    assert_eq!(summary.total, 27);
    assert_eq!(summary.by_difficulty.values().sum::<usize>(), 27);
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());

    let traces = pipeline.run(&turns).unwrap();
    assert!(traces.iter().all(|t| t.predicted_sql.is_none()));
    assert!(summarize(&traces, &[], &cats, None).unwrap().matches.is_none());
}

#[test]
fn turn_errors_carry_their_position() {
    let cats = annotated_mini_catalogs();
    let mut turns = mini_turns(&cats);
    turns[1].sql = "SELECT nosuch FROM student".into();
    let params = ExtractorParams::init(64, 16, 1);
    let err = run_mini(&cats, &turns[..3], &params).unwrap_err();
    match &err {
        Error::Turn { db_id, interaction, turn, .. } => {
            assert_eq!((db_id.as_str(), interaction.as_str(), *turn), ("pets_1", "p01", 2));
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(err.root(), Error::Validation(_)));
    assert!(err.to_string().starts_with("pets_1/p01 turn 2: "));
}

#[test]
fn generated_history_needs_a_generator() {
    let cats = annotated_mini_catalogs();
    let turns = mini_turns(&cats);
    let params = ExtractorParams::init(64, 16, 1);
    let provider = mini_provider();
    let similarity = EmbeddingSimilarity::default();
    let model = mini_model();
    let config = PipelineConfig {
        history: HistorySource::Generated,
        ..Default::default()
    };
    let mut pipeline = Pipeline {
        params: &params,
        provider: &provider,
        similarity: &similarity,
        catalogs: &cats,
        model: &model,
        config: &config,
        generator: None,
    };
    assert!(matches!(pipeline.run(&turns[..3]), Err(Error::Config(_))));

    let stub = ChatClient::new(ChatClientConfig::default());
    pipeline.generator = Some(&stub);
    let traces = pipeline.run(&turns[..3]).unwrap();
    // the stub answers turn 1 with a scan of the first extracted table, and
    // later turns reuse whatever base the generated history offers
    for t in &traces[1..] {
        let base = t.base.as_ref().unwrap();
        assert_eq!(Some(base.sql.as_str()), traces[base.turn - 1].predicted_sql.as_deref());
    }
}

#[test]
fn pipeline_config_defaults_and_unknown_keys() {
    let c: PipelineConfig = serde_json::from_str(r#"{"window": 3, "history": "generated"}"#).unwrap();
    assert_eq!((c.window, c.history), (3, HistorySource::Generated));
    assert_eq!(c.terminator, DEFAULT_TERMINATOR);
    assert!(serde_json::from_str::<PipelineConfig>(r#"{"windw": 3}"#).is_err());
}
