//! Reference implementations written directly from the definitions, used to
//! check the library code.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqltrack::sese::{
    backward, batch_loss, ExtractorParams, GateParams, HeadKind, HeadParams, LossConfig, Matrix, TrainItem,
    TurnExample,
};

// ---- forward pass ---------------------------------------------------------

fn vec_mat(x: &[f64], m: &Matrix) -> Vec<f64> {
    (0..m.cols)
        .map(|c| (0..m.rows).map(|r| x[r] * m.at(r, c)).sum())
        .collect()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Gate output for one item, straight from the formulas.
pub fn naive_gate(g: &GateParams, residual: &[f64], e: &[f64], e_hat: &[f64]) -> Vec<f64> {
    let a: Vec<f64> = vec_mat(e, &g.w1).iter().zip(&g.b1).map(|(x, b)| x + b).collect();
    let b: Vec<f64> = vec_mat(e_hat, &g.w2).iter().zip(&g.b2).map(|(x, b)| x + b).collect();
    let ab: Vec<f64> = a.into_iter().chain(b).collect();
    let gate: Vec<f64> = vec_mat(&ab, &g.wg)
        .iter()
        .zip(&g.bg)
        .map(|(x, b)| logistic(x + b))
        .collect();
    let r: Vec<f64> = (0..e.len())
        .map(|j| residual[j] + gate[j] * e[j] + (1.0 - gate[j]) * e_hat[j])
        .collect();
    let n = r.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        r
    } else {
        r.iter().map(|x| x / n).collect()
    }
}

/// Two-way softmax, positive class.
pub fn naive_head(h: &HeadParams, x: &[f64]) -> f64 {
    let u: Vec<f64> = vec_mat(x, &h.u1).iter().zip(&h.c1).map(|(a, b)| a + b).collect();
    let l: Vec<f64> = vec_mat(&u, &h.u2).iter().zip(&h.c2).map(|(a, b)| a + b).collect();
    let mx = l[0].max(l[1]);
    let (e0, e1) = ((l[0] - mx).exp(), (l[1] - mx).exp());
    e1 / (e0 + e1)
}

pub fn naive_probability(params: &ExtractorParams, item: &TrainItem, head: HeadKind) -> f64 {
    let gate = match head {
        HeadKind::Table => &params.table_gate,
        HeadKind::Column | HeadKind::Star => &params.column_gate,
    };
    let h = match head {
        HeadKind::Table => &params.table_head,
        HeadKind::Column => &params.column_head,
        HeadKind::Star => &params.star_head,
    };
    let residual = item.residual.as_ref().unwrap_or(&item.e);
    naive_head(h, &naive_gate(gate, residual, &item.e, &item.e_hat))
}

pub fn naive_focal(p: f64, y: bool, gamma: f64, alpha: f64) -> f64 {
    let (pt, at) = if y { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
    let pt = pt.clamp(1e-7, 1.0 - 1e-7);
    -at * (1.0 - pt).powf(gamma) * pt.ln()
}

// ---- random instances -----------------------------------------------------

pub fn random_params(rng: &mut ChaCha8Rng, d: usize, omega: usize, scale: f64) -> ExtractorParams {
    let mut p = ExtractorParams::zeros(d, omega);
    for (_, t) in p.tensors_mut() {
        for x in t.iter_mut() {
            *x = rng.gen_range(-scale..scale);
        }
    }
    p
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn random_item(rng: &mut ChaCha8Rng, d: usize) -> TrainItem {
    TrainItem {
        e: random_vec(rng, d),
        e_hat: random_vec(rng, d),
        residual: rng.gen_bool(0.3).then(|| random_vec(rng, d)),
        label: rng.gen_bool(0.4),
    }
}

pub fn random_turn(rng: &mut ChaCha8Rng, d: usize) -> TurnExample {
    let mut group = |lo: usize| (0..rng.gen_range(lo..4)).map(|_| random_item(rng, d)).collect::<Vec<_>>();
    TurnExample {
        tables: group(1),
        columns: group(1),
        stars: group(0),
    }
}

pub struct GradInstance {
    pub params: ExtractorParams,
    pub turns: Vec<TurnExample>,
    pub cfg: LossConfig,
}

pub fn random_grad_instance(seed: u64) -> GradInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(2..=8);
    let omega = rng.gen_range(1..=4);
    let params = random_params(&mut rng, d, omega, 0.8);
    let turns = (0..rng.gen_range(1..=3)).map(|_| random_turn(&mut rng, d)).collect();
    let cfg = LossConfig {
        gamma: [0.0, 0.5, 1.0, 2.0, 3.0][rng.gen_range(0..5)],
        alpha: rng.gen_range(0.05..0.95),
        star_weight: rng.gen_range(0.5..2.0),
    };
    GradInstance { params, turns, cfg }
}

/// Largest relative error between analytic and central-difference partials
/// over every scalar parameter. The denominator is floored at `1e-6` so
/// vanishing partials are compared absolutely.
pub fn gradient_check(inst: &GradInstance, h: f64) -> f64 {
    let (_, grads) = backward(&inst.params, &inst.turns, &inst.cfg).unwrap();
    let analytic: Vec<f64> = grads.tensors().into_iter().flat_map(|(_, t)| t.to_vec()).collect();
    let mut worst = 0.0f64;
    let mut k = 0;
    let n_tensors = inst.params.tensors().len();
    for ti in 0..n_tensors {
        let len = inst.params.tensors()[ti].1.len();
        for i in 0..len {
            let mut plus = inst.params.clone();
            plus.tensors_mut()[ti].1[i] += h;
            let mut minus = inst.params.clone();
            minus.tensors_mut()[ti].1[i] -= h;
            let fd = (batch_loss(&plus, &inst.turns, &inst.cfg).unwrap()
                - batch_loss(&minus, &inst.turns, &inst.cfg).unwrap())
                / (2.0 * h);
            let a = analytic[k];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
            k += 1;
        }
    }
    worst
}

// ---- redundancy -----------------------------------------------------------

/// One sample as plain lists: tables, and `(table, column)` pairs.
#[derive(Clone, Debug)]
pub struct RawSample {
    pub gold_tables: Vec<usize>,
    pub extracted_tables: Vec<usize>,
    pub gold_columns: Vec<(usize, usize)>,
    pub extracted_columns: Vec<(usize, usize)>,
}

/// Score of one (gold, extracted) pair by counting, with lists treated as
/// sets.
pub fn brute_score(gold: &[usize], extracted: &[usize]) -> f64 {
    let mut g: Vec<usize> = gold.to_vec();
    g.sort_unstable();
    g.dedup();
    let mut e: Vec<usize> = extracted.to_vec();
    e.sort_unstable();
    e.dedup();
    let missing = g.iter().filter(|x| !e.contains(x)).count();
    let extra = e.iter().filter(|x| !g.contains(x)).count();
    if missing == 0 && extra == 0 {
        0.0
    } else if missing == 0 {
        extra as f64 / e.len() as f64
    } else {
        1.0
    }
}

pub fn brute_trs(samples: &[RawSample]) -> f64 {
    let mut total = 0.0;
    for s in samples {
        total += brute_score(&s.gold_tables, &s.extracted_tables);
    }
    100.0 * total / samples.len() as f64
}

/// Sums per sample first, then across samples, matching the library's
/// accumulation order so results compare bit for bit.
pub fn brute_crs(samples: &[RawSample]) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for s in samples {
        let mut tables = s.gold_tables.clone();
        tables.sort_unstable();
        tables.dedup();
        let mut sub = 0.0;
        for &t in &tables {
            let g: Vec<usize> = s.gold_columns.iter().filter(|c| c.0 == t).map(|c| c.1).collect();
            let e: Vec<usize> = s.extracted_columns.iter().filter(|c| c.0 == t).map(|c| c.1).collect();
            sub += brute_score(&g, &e);
            n += 1;
        }
        total += sub;
    }
    100.0 * total / n as f64
}

/// A random sample whose table score falls in the requested branch:
/// 0 exact, 1 strict superset, 2 something missing.
pub fn random_sample(rng: &mut ChaCha8Rng, branch: u8) -> RawSample {
    let n_tables = 6;
    let n_cols = 5;
    let k = rng.gen_range(1..=3);
    let mut gold_tables: Vec<usize> = Vec::new();
    while gold_tables.len() < k {
        let t = rng.gen_range(0..n_tables);
        if !gold_tables.contains(&t) {
            gold_tables.push(t);
        }
    }
    let mut extracted_tables = gold_tables.clone();
    match branch {
        0 => {}
        1 => {
            let extra = (0..n_tables).find(|t| !gold_tables.contains(t)).unwrap();
            extracted_tables.push(extra);
        }
        _ => {
            extracted_tables.remove(rng.gen_range(0..extracted_tables.len()));
            if rng.gen_bool(0.5) {
                let extra = (0..n_tables).find(|t| !gold_tables.contains(t)).unwrap();
                extracted_tables.push(extra);
            }
        }
    }
    let mut gold_columns = Vec::new();
    let mut extracted_columns = Vec::new();
    for t in 0..n_tables {
        for c in 0..n_cols {
            let in_gold = gold_tables.contains(&t) && rng.gen_bool(0.4);
            if in_gold {
                gold_columns.push((t, c));
            }
            // each column branch is drawn independently of the table branch
            let keep = match rng.gen_range(0..3) {
                0 => in_gold,
                1 => in_gold || rng.gen_bool(0.3),
                _ => rng.gen_bool(0.5),
            };
            if keep {
                extracted_columns.push((t, c));
            }
        }
    }
    RawSample {
        gold_tables,
        extracted_tables,
        gold_columns,
        extracted_columns,
    }
}

// ---- context window -------------------------------------------------------

/// Direct simulation of the window update: append the new turn and drop the
/// oldest while more than `cap` remain.
pub fn simulate_window(turns: &[usize], cap: usize) -> Vec<Vec<usize>> {
    let mut q: VecDeque<usize> = VecDeque::new();
    let mut states = Vec::new();
    for &t in turns {
        q.push_back(t);
        while q.len() > cap {
            q.pop_front();
        }
        states.push(q.iter().copied().collect());
    }
    states
}

// ---- base-SQL selection ---------------------------------------------------

use sqltrack::context::{ContextWindow, HistoryQaStore, HistorySchemaStore, QaEntry, SimilarityProvider};
use sqltrack::sese::SchemaProbabilities;

/// Jensen–Shannon divergence in bits as entropy of the mixture minus mean
/// entropy, a different route from the KL form.
pub fn entropy_js(p: &[f64], q: &[f64]) -> f64 {
    let h = |d: &[f64]| -> f64 { d.iter().filter(|x| **x > 0.0).map(|x| -x * x.log2()).sum() };
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a + b) / 2.0).collect();
    h(&m) - (h(p) + h(q)) / 2.0
}

/// Smoothed, normalized tables-then-columns vector.
pub fn flat_distribution(p: &SchemaProbabilities) -> Vec<f64> {
    let mut v: Vec<f64> = p.tables.clone();
    for c in &p.columns {
        v.extend(c);
    }
    let v: Vec<f64> = v.iter().map(|x| x + 1e-9).collect();
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

/// Similarity from word overlap (Jaccard), independent of any embedding.
pub struct OverlapSimilarity;

impl SimilarityProvider for OverlapSimilarity {
    fn score(&self, a: &str, b: &str) -> sqltrack::Result<f64> {
        let wa: std::collections::BTreeSet<&str> = a.split_whitespace().collect();
        let wb: std::collections::BTreeSet<&str> = b.split_whitespace().collect();
        let union = wa.union(&wb).count();
        Ok(if union == 0 { 1.0 } else { wa.intersection(&wb).count() as f64 / union as f64 })
    }
}

pub struct FuzzHistory {
    pub schema: HistorySchemaStore,
    pub qa: HistoryQaStore,
    pub window: ContextWindow,
    pub m: usize,
    pub question: String,
}

const WORDS: &[&str] = &["show", "count", "pets", "students", "oldest", "names", "each", "type", "age", "them"];

fn random_question(rng: &mut ChaCha8Rng) -> String {
    (0..rng.gen_range(1..6)).map(|_| WORDS[rng.gen_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
}

/// Random stores over `shape` (tables, columns per table), a window built
/// from a random increasing subset of the earlier turns and a current turn.
pub fn random_history(rng: &mut ChaCha8Rng, shape: &[usize]) -> FuzzHistory {
    let m = rng.gen_range(1..=12);
    let mut schema = HistorySchemaStore::default();
    let mut qa = HistoryQaStore::default();
    let draw = |rng: &mut ChaCha8Rng| rng.gen_range(0..=4) as f64 / 4.0;
    for turn in 1..=m {
        let probs = SchemaProbabilities {
            tables: shape.iter().map(|_| draw(rng)).collect(),
            columns: shape.iter().map(|&n| (0..n).map(|_| draw(rng)).collect()).collect(),
            stars: shape.iter().map(|_| draw(rng)).collect(),
        };
        schema.record(turn, probs).unwrap();
        if turn < m {
            qa.record_entry(QaEntry {
                turn,
                question: random_question(rng),
                sql: format!("SELECT {turn}"),
                valid: rng.gen_bool(0.6),
            })
            .unwrap();
        }
    }
    let mut window = ContextWindow::new(rng.gen_range(1..=6)).unwrap();
    for turn in 1..m {
        if rng.gen_bool(0.7) {
            window.slide(turn).unwrap();
        }
    }
    FuzzHistory {
        schema,
        qa,
        window,
        m,
        question: random_question(rng),
    }
}

/// Oracle relevance of every valid in-window earlier turn, oldest first.
pub fn brute_candidates(h: &FuzzHistory, sim: &dyn SimilarityProvider) -> Vec<(usize, f64)> {
    let current = flat_distribution(h.schema.get(h.m).unwrap());
    let mut out = Vec::new();
    for turn in 1..h.m {
        let Some(e) = h.qa.get(turn) else { continue };
        if !e.valid || !h.window.contains(turn) {
            continue;
        }
        let past = flat_distribution(h.schema.get(turn).unwrap());
        let score = sim.score(&h.question, &e.question).unwrap() + 1.0 - entropy_js(&current, &past);
        out.push((turn, score));
    }
    out
}

/// Runs `select_base_sql` on `h` and checks it against the oracle: nothing
/// when there is no candidate, otherwise a valid in-window earlier turn
/// whose score is the oracle maximum.
pub fn check_selection(h: &FuzzHistory, sim: &dyn SimilarityProvider) -> Result<(), String> {
    let got = sqltrack::context::select_base_sql(&h.schema, &h.qa, &h.window, h.m, &h.question, sim)
        .map_err(|e| e.to_string())?;
    let cands = brute_candidates(h, sim);
    let Some(sel) = got else {
        return if cands.is_empty() { Ok(()) } else { Err(format!("nothing chosen from {cands:?}")) };
    };
    let entry = h.qa.get(sel.turn).ok_or("chosen turn not in the store")?;
    if sel.turn >= h.m || !h.window.contains(sel.turn) || !entry.valid || entry.sql != sel.sql {
        return Err(format!("turn {} is not an eligible candidate", sel.turn));
    }
    let max = cands.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let own = cands.iter().find(|c| c.0 == sel.turn).map(|c| c.1).ok_or("chosen turn missing")?;
    if (own - sel.score).abs() > 1e-9 || own < max - 1e-9 {
        return Err(format!("turn {} scored {} (oracle {own}, best {max})", sel.turn, sel.score));
    }
    Ok(())
}

/// The library's sample type built from plain lists.
pub fn to_sample(raw: &RawSample) -> sqltrack::metrics::RedundancySample {
    let mut s = sqltrack::metrics::RedundancySample {
        gold_tables: raw.gold_tables.iter().copied().collect(),
        extracted_tables: raw.extracted_tables.iter().copied().collect(),
        ..Default::default()
    };
    for &(t, c) in &raw.gold_columns {
        s.gold_columns.entry(t).or_default().insert(c);
    }
    for &(t, c) in &raw.extracted_columns {
        s.extracted_columns.entry(t).or_default().insert(c);
    }
    s
}
