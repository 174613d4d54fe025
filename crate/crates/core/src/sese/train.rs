use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::{perturb_with, question_context, EmbedCache, ItemBuilder, Marks};
use super::model::{backward, item_probability, LossConfig, TrainItem, TurnExample};
use super::optim::{adamw_step, AdamWConfig, AdamWState};
use super::params::{ExtractorParams, HeadKind};
use crate::catalog::{ColumnId, SchemaCatalog};
use crate::dataset::LabeledTurn;
use crate::embedding::EmbeddingProvider;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma: f64,
    pub alpha: f64,
    /// Weight of the star term in the per-turn loss.
    pub star_weight: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Probability of reshuffling and, independently, of inserting one
    /// foreign item, per turn and per item group.
    pub perturb_prob: f64,
    pub seed: u64,
    pub token_budget: usize,
    pub threshold_s: f64,
    /// Hidden width of the classification heads.
    pub omega: usize,
    /// Use the owning table's embedding as the column gate's residual term.
    pub table_residual: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        let loss = LossConfig::default();
        Self {
            gamma: loss.gamma,
            alpha: loss.alpha,
            star_weight: loss.star_weight,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            weight_decay: adam.weight_decay,
            eps: adam.eps,
            epochs: 200,
            batch_size: 16,
            perturb_prob: 0.15,
            seed: 42,
            token_budget: 512,
            threshold_s: 0.1,
            omega: 32,
            table_residual: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")))
            }
        };
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        unit("alpha", self.alpha)?;
        unit("perturb_prob", self.perturb_prob)?;
        unit("threshold_s", self.threshold_s)?;
        unit("beta1", self.beta1)?;
        unit("beta2", self.beta2)?;
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) || !(self.star_weight >= 0.0) {
            return Err(Error::Config("eps must be > 0; weight_decay and star_weight >= 0".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.omega == 0 || self.token_budget == 0 {
            return Err(Error::Config("epochs, batch_size, omega and token_budget must be positive".into()));
        }
        Ok(())
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            gamma: self.gamma,
            alpha: self.alpha,
            star_weight: self.star_weight,
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            weight_decay: self.weight_decay,
            eps: self.eps,
        }
    }
}

/// Micro-averaged F1 per item kind at a fixed threshold.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub table_f1: f64,
    pub column_f1: f64,
    pub star_f1: f64,
}

#[derive(Clone, Copy, Debug, Default)]
struct Counts {
    tp: usize,
    fp: usize,
    fn_: usize,
}

impl Counts {
    fn add(&mut self, predicted: bool, gold: bool) {
        match (predicted, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            _ => {}
        }
    }

    /// 1 when there is nothing to find and nothing was predicted.
    fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / denom as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    /// `None` without a held-out set.
    pub table_f1: Option<f64>,
    pub column_f1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("log entry serializes") + "\n")
            .collect()
    }
}

fn catalog_map(catalogs: &[SchemaCatalog]) -> HashMap<&str, usize> {
    catalogs.iter().enumerate().map(|(i, c)| (c.db_id.as_str(), i)).collect()
}

fn check_turn(turn: &LabeledTurn, catalog: &SchemaCatalog) -> Result<()> {
    let n = catalog.tables.len();
    let in_range = |id: &ColumnId| id.table < n && id.column < catalog.tables[id.table].columns.len();
    let labels = std::iter::once(&turn.labels).chain(turn.previous.as_ref());
    for l in labels {
        if l.tables.iter().chain(&l.star_tables).any(|t| *t >= n) || !l.columns.iter().all(in_range) {
            return Err(Error::Validation(format!(
                "labels of {}/{} turn {} fall outside catalog `{}`",
                turn.db_id, turn.interaction, turn.turn, catalog.db_id
            )));
        }
    }
    if turn.questions.is_empty() {
        return Err(Error::Validation(format!(
            "{}/{} turn {} has no questions",
            turn.db_id, turn.interaction, turn.turn
        )));
    }
    Ok(())
}

/// A turn's catalog and its unperturbed, fully labeled items.
struct Prepared {
    catalog: usize,
    ctx: String,
    marks: Marks,
    example: TurnExample,
}

fn prepare(
    turns: &[LabeledTurn],
    catalogs: &[SchemaCatalog],
    cache: &mut EmbedCache<'_>,
    config: &TrainConfig,
) -> Result<Vec<Prepared>> {
    let ids = catalog_map(catalogs);
    turns
        .iter()
        .map(|turn| {
            let &ci = ids.get(turn.db_id.as_str()).ok_or_else(|| {
                Error::Validation(format!("no catalog for db_id `{}`", turn.db_id))
            })?;
            let catalog = &catalogs[ci];
            check_turn(turn, catalog)?;
            let marks = turn.previous.as_ref().map(Marks::from).unwrap_or_default();
            let ctx = question_context(&turn.questions);
            let example = ItemBuilder {
                catalog,
                ctx: ctx.clone(),
                marks: &marks,
                cache: &mut *cache,
                table_residual: config.table_residual,
            }
            .full_turn(Some(&turn.labels))?;
            Ok(Prepared {
                catalog: ci,
                ctx,
                marks,
                example,
            })
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Slot {
    Own(usize),
    Foreign(usize, ColumnId),
}

/// Micro F1 of thresholded predictions against gold labels, with the
/// previous turn's gold columns marked.
pub fn evaluate(
    params: &ExtractorParams,
    turns: &[LabeledTurn],
    catalogs: &[SchemaCatalog],
    provider: &dyn EmbeddingProvider,
    config: &TrainConfig,
    threshold: f64,
) -> Result<F1Scores> {
    let mut cache = EmbedCache::new(provider);
    let prepared = prepare(turns, catalogs, &mut cache, config)?;
    score_prepared(params, &prepared, threshold)
}

fn score_prepared(params: &ExtractorParams, prepared: &[Prepared], threshold: f64) -> Result<F1Scores> {
    let mut counts = [Counts::default(); 3];
    for p in prepared {
        let groups = [
            (HeadKind::Table, &p.example.tables),
            (HeadKind::Column, &p.example.columns),
            (HeadKind::Star, &p.example.stars),
        ];
        for (k, (head, items)) in groups.into_iter().enumerate() {
            for item in items {
                let prob = item_probability(params, item, head)?;
                counts[k].add(prob >= threshold, item.label);
            }
        }
    }
    Ok(F1Scores {
        table_f1: counts[0].f1(),
        column_f1: counts[1].f1(),
        star_f1: counts[2].f1(),
    })
}

/// Held-out F1 in the log is measured at this threshold.
pub const LOG_F1_THRESHOLD: f64 = 0.5;

/// Mini-batch AdamW on the focal objective with perturbation augmentation.
///
/// Turns are put in a canonical order first, so the result does not depend
/// on the order of `turns`. Each epoch reshuffles with the seeded generator;
/// distractors are columns and tables of the other catalogs in `catalogs`.
pub fn train(
    turns: &[LabeledTurn],
    held_out: &[LabeledTurn],
    catalogs: &[SchemaCatalog],
    provider: &dyn EmbeddingProvider,
    config: &TrainConfig,
) -> Result<(ExtractorParams, TrainingLog)> {
    config.validate()?;
    if turns.is_empty() {
        return Err(Error::Validation("training set is empty".into()));
    }
    let mut keyed: Vec<(String, &LabeledTurn)> = turns
        .iter()
        .map(|t| (serde_json::to_string(t).expect("turn serializes"), t))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    let ordered: Vec<LabeledTurn> = keyed.into_iter().map(|(_, t)| t.clone()).collect();

    let mut cache = EmbedCache::new(provider);
    let prepared = prepare(&ordered, catalogs, &mut cache, config)?;
    let held = prepare(held_out, catalogs, &mut cache, config)?;

    let d = provider.dim();
    let mut params = ExtractorParams::init(d, config.omega, config.seed);
    let mut state = AdamWState::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let loss_cfg = config.loss();
    let adam = config.optimizer();
    let mut log = TrainingLog::default();

    let foreign_columns: Vec<Vec<Slot>> = (0..catalogs.len())
        .map(|own| {
            catalogs
                .iter()
                .enumerate()
                .filter(|(ci, _)| *ci != own)
                .flat_map(|(ci, c)| c.column_ids().map(move |id| Slot::Foreign(ci, id)))
                .collect()
        })
        .collect();
    let foreign_tables: Vec<Vec<Slot>> = (0..catalogs.len())
        .map(|own| {
            catalogs
                .iter()
                .enumerate()
                .filter(|(ci, _)| *ci != own)
                .flat_map(|(ci, c)| (0..c.tables.len()).map(move |t| Slot::Foreign(ci, ColumnId::new(t, 0))))
                .collect()
        })
        .collect();

    let mut order: Vec<usize> = (0..prepared.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let p = &prepared[i];
                batch.push(perturbed(p, catalogs, &foreign_columns, &foreign_tables, &mut cache, config, &mut rng)?);
            }
            let (loss, grads) = backward(&params, &batch, &loss_cfg)?;
            epoch_loss += loss * chunk.len() as f64;
            adamw_step(&mut params, &grads, &mut state, &adam);
        }
        let (table_f1, column_f1) = if held.is_empty() {
            (None, None)
        } else {
            let f = score_prepared(&params, &held, LOG_F1_THRESHOLD)?;
            (Some(f.table_f1), Some(f.column_f1))
        };
        log.epochs.push(EpochLog {
            epoch,
            loss: epoch_loss / prepared.len() as f64,
            table_f1,
            column_f1,
        });
    }
    params.validate()?;
    Ok((params, log))
}

fn perturbed(
    p: &Prepared,
    catalogs: &[SchemaCatalog],
    foreign_columns: &[Vec<Slot>],
    foreign_tables: &[Vec<Slot>],
    cache: &mut EmbedCache<'_>,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TurnExample> {
    let mut b = ItemBuilder {
        catalog: &catalogs[p.catalog],
        ctx: p.ctx.clone(),
        marks: &p.marks,
        cache,
        table_residual: config.table_residual,
    };
    let own = |n: usize| (0..n).map(Slot::Own).collect::<Vec<_>>();
    let columns = perturb_with(&own(p.example.columns.len()), config.perturb_prob, &foreign_columns[p.catalog], rng);
    let tables = perturb_with(&own(p.example.tables.len()), config.perturb_prob, &foreign_tables[p.catalog], rng);
    let mut materialize = |slots: Vec<Slot>, base: &[TrainItem], is_table: bool| -> Result<Vec<TrainItem>> {
        slots
            .into_iter()
            .map(|s| match s {
                Slot::Own(i) => Ok(base[i].clone()),
                Slot::Foreign(ci, id) if is_table => foreign_table(&mut b, &catalogs[ci], id.table),
                Slot::Foreign(ci, id) => b.foreign_column(&catalogs[ci], id, false, false),
            })
            .collect()
    };
    let columns = materialize(columns, &p.example.columns, false)?;
    let tables = materialize(tables, &p.example.tables, true)?;
    Ok(TurnExample {
        tables,
        columns,
        stars: p.example.stars.clone(),
    })
}

fn foreign_table(b: &mut ItemBuilder<'_, '_, '_>, catalog: &SchemaCatalog, t: usize) -> Result<TrainItem> {
    let name = &catalog.tables[t].name;
    Ok(TrainItem {
        e: b.cache.get(&super::features::table_text(&b.ctx, name))?,
        e_hat: b.cache.get(super::features::table_annotation(catalog, t))?,
        residual: None,
        label: false,
    })
}

/// Saved extractor with everything needed to reproduce predictions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub d: usize,
    pub omega: usize,
    pub seed: u64,
    pub provider: String,
    pub config: TrainConfig,
    pub params: ExtractorParams,
}

pub const CHECKPOINT_FORMAT: &str = "sqltrack-extractor";
pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(params: ExtractorParams, config: TrainConfig, provider: &dyn EmbeddingProvider) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            d: params.d,
            omega: params.omega,
            seed: config.seed,
            provider: provider.id(),
            config,
            params,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ck: Checkpoint =
            serde_json::from_str(&raw).map_err(|e| Error::format(path.display().to_string(), e))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path.display().to_string(),
                format!("unsupported checkpoint {} v{}", ck.format, ck.version),
            ));
        }
        if ck.d != ck.params.d || ck.omega != ck.params.omega {
            return Err(Error::Validation("checkpoint header disagrees with its tensors".into()));
        }
        ck.params.validate()?;
        Ok(ck)
    }
}
