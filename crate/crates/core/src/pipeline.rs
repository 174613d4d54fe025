//! Per-turn orchestration: schema probabilities, extraction, base-SQL
//! selection and the fine-tuning example, with the history stores updated
//! after every turn.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::SchemaCatalog;
use crate::context::{
    select_base_sql, BaseSelection, ContextWindow, HistoryQaStore, HistorySchemaStore, SimilarityProvider,
    DEFAULT_WINDOW,
};
use crate::corpus::{build_example, write_corpus, CorpusSummary, ExampleMeta, FineTuneExample, DEFAULT_TERMINATOR};
use crate::dataset::{LabeledTurn, SkippedTurn};
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::extraction::{filter_and_rank, insert_star, serialize_extracted, ExtractedSchema};
use crate::llm::{extract_sql, ChatClient};
use crate::metrics::{
    aggregate, exact_match, execution_match, redundancy_report, MatchReport, QueryExecutor, RedundancyReport,
    RedundancySample, TurnMatch,
};
use crate::sese::{predict_with_marks, EmbedCache, ExtractorParams, Marks, SchemaProbabilities, TrainConfig};
use crate::sql::{Difficulty, GoldLabels};

/// Where the SQL of earlier turns comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistorySource {
    /// Gold SQL, as when building a training corpus.
    #[default]
    Gold,
    /// The generator's own output for each turn.
    Generated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub window: usize,
    pub history: HistorySource,
    pub terminator: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            history: HistorySource::Gold,
            terminator: DEFAULT_TERMINATOR.into(),
        }
    }
}

/// Everything computed for one turn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurnTrace {
    pub db_id: String,
    pub interaction: String,
    pub turn: usize,
    pub probs: SchemaProbabilities,
    pub extracted: ExtractedSchema,
    pub schema_text: String,
    pub base: Option<BaseSelection>,
    pub example: FineTuneExample,
    pub gold: GoldLabels,
    pub gold_sql: String,
    pub difficulty: Difficulty,
    /// Generator output, when a generator was attached.
    pub predicted_sql: Option<String>,
}

pub struct Pipeline<'a> {
    pub params: &'a ExtractorParams,
    pub provider: &'a dyn EmbeddingProvider,
    pub similarity: &'a dyn SimilarityProvider,
    pub catalogs: &'a [SchemaCatalog],
    pub model: &'a TrainConfig,
    pub config: &'a PipelineConfig,
    pub generator: Option<&'a ChatClient>,
}

/// Splits turns into runs that share `(db_id, interaction)`, keeping order.
pub fn group_interactions(turns: &[LabeledTurn]) -> Vec<&[LabeledTurn]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=turns.len() {
        if i == turns.len()
            || turns[i].interaction != turns[start].interaction
            || turns[i].db_id != turns[start].db_id
        {
            if i > start {
                out.push(&turns[start..i]);
            }
            start = i;
        }
    }
    out
}

impl Pipeline<'_> {
    fn catalog(&self, db_id: &str) -> Result<&SchemaCatalog> {
        self.catalogs
            .iter()
            .find(|c| c.db_id == db_id)
            .ok_or_else(|| Error::Validation(format!("no catalog for db_id `{db_id}`")))
    }

    /// Runs every turn of one interaction in order.
    pub fn run_interaction(&self, turns: &[LabeledTurn]) -> Result<Vec<TurnTrace>> {
        if self.config.history == HistorySource::Generated && self.generator.is_none() {
            return Err(Error::Config("generated history needs a generator".into()));
        }
        let mut schema_store = HistorySchemaStore::default();
        let mut qa_store = HistoryQaStore::default();
        let mut window = ContextWindow::new(self.config.window)?;
        let mut previous: Option<ExtractedSchema> = None;
        let mut cache = EmbedCache::new(self.provider);
        let mut out = Vec::with_capacity(turns.len());
        for t in turns {
            let trace = self
                .run_turn(t, &mut schema_store, &mut qa_store, &mut window, previous.as_ref(), &mut cache)
                .map_err(|e| Error::Turn {
                    db_id: t.db_id.clone(),
                    interaction: t.interaction.clone(),
                    turn: t.turn,
                    source: Box::new(e),
                })?;
            previous = Some(trace.extracted.clone());
            out.push(trace);
        }
        Ok(out)
    }

    fn run_turn(
        &self,
        t: &LabeledTurn,
        schema_store: &mut HistorySchemaStore,
        qa_store: &mut HistoryQaStore,
        window: &mut ContextWindow,
        previous: Option<&ExtractedSchema>,
        cache: &mut EmbedCache<'_>,
    ) -> Result<TurnTrace> {
        let catalog = self.catalog(&t.db_id)?;
        let marks = previous.map(Marks::from).unwrap_or_default();
        let probs = predict_with_marks(self.params, cache, &t.questions, catalog, &marks, self.model)?;
        let s = self.model.threshold_s;
        let extracted = insert_star(&filter_and_rank(&probs, catalog, s)?, &probs.stars, s)?;
        let schema_text = serialize_extracted(&extracted, catalog);

        schema_store.record(t.turn, probs.clone())?;
        let question = t.questions.last().expect("labeled turns carry their question");
        let base = select_base_sql(schema_store, qa_store, window, t.turn, question, self.similarity)?;
        let base_sql = base.as_ref().map_or("", |b| b.sql.as_str());
        let example = build_example(
            &t.questions,
            &schema_text,
            base_sql,
            &t.sql,
            catalog,
            ExampleMeta {
                db_id: t.db_id.clone(),
                interaction: t.interaction.clone(),
                turn: t.turn,
            },
            &self.config.terminator,
        )?;
        let predicted_sql = match self.generator {
            Some(g) => Some(extract_sql(&g.complete(&example.input)?)),
            None => None,
        };
        let history_sql = match self.config.history {
            HistorySource::Gold => t.sql.as_str(),
            HistorySource::Generated => predicted_sql.as_deref().unwrap_or(""),
        };
        qa_store.record(t.turn, question, history_sql, catalog)?;
        window.slide(t.turn)?;

        Ok(TurnTrace {
            db_id: t.db_id.clone(),
            interaction: t.interaction.clone(),
            turn: t.turn,
            probs,
            extracted,
            schema_text,
            base,
            example,
            gold: t.labels.clone(),
            gold_sql: t.sql.clone(),
            difficulty: t.difficulty,
            predicted_sql,
        })
    }

    /// Every interaction in dataset order.
    pub fn run(&self, turns: &[LabeledTurn]) -> Result<Vec<TurnTrace>> {
        let mut out = Vec::with_capacity(turns.len());
        for group in group_interactions(turns) {
            out.extend(self.run_interaction(group)?);
        }
        Ok(out)
    }
}

/// Redundancy of the traces' probabilities re-extracted at threshold `s`.
pub fn redundancy_at(traces: &[TurnTrace], catalogs: &[SchemaCatalog], s: f64) -> Result<RedundancyReport> {
    let by_id: HashMap<&str, &SchemaCatalog> = catalogs.iter().map(|c| (c.db_id.as_str(), c)).collect();
    let mut samples = Vec::with_capacity(traces.len());
    for t in traces {
        let catalog = by_id
            .get(t.db_id.as_str())
            .ok_or_else(|| Error::Validation(format!("no catalog for db_id `{}`", t.db_id)))?;
        samples.push(RedundancySample::new(&t.gold, &filter_and_rank(&t.probs, catalog, s)?));
    }
    redundancy_report(&samples, s)
}

/// Runs the pipeline over `turns` and writes one corpus line per turn.
pub fn emit_corpus(pipeline: &Pipeline<'_>, turns: &[LabeledTurn], out: impl AsRef<Path>) -> Result<CorpusSummary> {
    let traces = pipeline.run(turns)?;
    let examples: Vec<FineTuneExample> = traces.iter().map(|t| t.example.clone()).collect();
    let difficulties: Vec<&str> = traces.iter().map(|t| t.difficulty.as_str()).collect();
    write_corpus(out, &examples, &difficulties)
}

/// Thresholds at which `run` reports redundancy.
pub const REPORT_THRESHOLDS: [f64; 2] = [0.1, 0.5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub turns: usize,
    pub skipped: Vec<SkippedTurn>,
    pub corpus: CorpusSummary,
    pub redundancy: Vec<RedundancyReport>,
    /// Present when a generator produced SQL for every turn.
    pub matches: Option<MatchReport>,
}

fn catalog_for<'c>(catalogs: &'c [SchemaCatalog], db_id: &str) -> Result<&'c SchemaCatalog> {
    catalogs
        .iter()
        .find(|c| c.db_id == db_id)
        .ok_or_else(|| Error::Validation(format!("no catalog for db_id `{db_id}`")))
}

/// Scores one prediction against its gold SQL. A missing prediction is
/// wrong on both metrics. Interactions are keyed as `db_id/interaction`.
pub fn match_turn(
    db_id: &str,
    interaction: &str,
    turn: usize,
    pred: Option<&str>,
    gold: &str,
    catalog: &SchemaCatalog,
    executor: Option<&dyn QueryExecutor>,
) -> Result<TurnMatch> {
    let em = pred.is_some_and(|p| exact_match(p, gold, catalog));
    let ex = match (executor, pred) {
        (Some(x), Some(p)) => Some(execution_match(x, catalog, p, gold)?),
        (Some(_), None) => Some(false),
        (None, _) => None,
    };
    Ok(TurnMatch {
        interaction: format!("{db_id}/{interaction}"),
        turn,
        em,
        ex,
    })
}

pub fn summarize(
    traces: &[TurnTrace],
    skipped: &[SkippedTurn],
    catalogs: &[SchemaCatalog],
    executor: Option<&dyn QueryExecutor>,
) -> Result<RunReport> {
    let redundancy = REPORT_THRESHOLDS
        .iter()
        .map(|&s| redundancy_at(traces, catalogs, s))
        .collect::<Result<Vec<_>>>()?;
    let mut corpus = CorpusSummary {
        total: traces.len(),
        ..Default::default()
    };
    for t in traces {
        *corpus.by_difficulty.entry(t.difficulty.as_str().to_string()).or_default() += 1;
    }
    let matches = if !traces.is_empty() && traces.iter().all(|t| t.predicted_sql.is_some()) {
        let mut turns = Vec::with_capacity(traces.len());
        for t in traces {
            let catalog = catalog_for(catalogs, &t.db_id)?;
            turns.push(match_turn(
                &t.db_id,
                &t.interaction,
                t.turn,
                t.predicted_sql.as_deref(),
                &t.gold_sql,
                catalog,
                executor,
            )?);
        }
        Some(aggregate(&turns)?)
    } else {
        None
    };
    Ok(RunReport {
        turns: traces.len(),
        skipped: skipped.to_vec(),
        corpus,
        redundancy,
        matches,
    })
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub db_id: String,
    pub interaction: String,
    pub turn: usize,
    pub sql: String,
}

/// Scores predictions against the labeled turns. Turns without a
/// prediction count as wrong; a prediction for an unknown turn, or two for
/// the same turn, is a validation error.
pub fn evaluate_predictions(
    turns: &[LabeledTurn],
    predictions: &[Prediction],
    catalogs: &[SchemaCatalog],
    executor: Option<&dyn QueryExecutor>,
) -> Result<MatchReport> {
    let mut by_key: HashMap<(&str, &str, usize), &str> = HashMap::new();
    for p in predictions {
        if by_key.insert((&p.db_id, &p.interaction, p.turn), &p.sql).is_some() {
            return Err(Error::Validation(format!(
                "duplicate prediction for {}/{} turn {}",
                p.db_id, p.interaction, p.turn
            )));
        }
    }
    let mut matches = Vec::with_capacity(turns.len());
    for t in turns {
        let catalog = catalog_for(catalogs, &t.db_id)?;
        let pred = by_key.remove(&(t.db_id.as_str(), t.interaction.as_str(), t.turn));
        matches.push(match_turn(&t.db_id, &t.interaction, t.turn, pred, &t.sql, catalog, executor)?);
    }
    if let Some(((db, inter, turn), _)) = by_key.into_iter().min() {
        return Err(Error::Validation(format!(
            "prediction for {db}/{inter} turn {turn} matches no labeled turn"
        )));
    }
    aggregate(&matches)
}
