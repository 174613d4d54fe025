//! Forward pass, focal loss and analytic gradients.
//!
//! Vectors are rows. For an item embedding `e` and annotation embedding `ê`:
//!
//! ```text
//! a = e·W1 + b1        b = ê·W2 + b2
//! g = σ([a ; b]·Wg + bg)
//! r = e + g∘e + (1 − g)∘ê          enhanced = r / |r|
//! u = enhanced·U1 + c1             l = u·U2 + c2
//! p = softmax(l)[1]
//! ```

use serde::{Deserialize, Serialize};

use super::params::{ExtractorParams, GateKind, GateParams, HeadKind, HeadParams};
use crate::embedding::norm;
use crate::error::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 − PROB_EPS]` before the log.
pub const PROB_EPS: f64 = 1e-7;

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one gate evaluation, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct GateTrace {
    pub hidden: Vec<f64>,
    pub g: Vec<f64>,
    pub norm: f64,
    pub enhanced: Vec<f64>,
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric {
            tensor: name.to_string(),
            message: "non-finite value".into(),
        })
    }
}

/// Gate with an explicit residual term; `enhance` uses `residual = e`.
pub fn gate_forward(gate: &GateParams, residual: &[f64], e: &[f64], e_hat: &[f64]) -> Result<GateTrace> {
    check_finite("item embedding", e)?;
    check_finite("annotation embedding", e_hat)?;
    check_finite("residual embedding", residual)?;
    let d = e.len();
    let mut hidden = gate.w1.left_mul(e);
    hidden.iter_mut().zip(&gate.b1).for_each(|(h, b)| *h += b);
    let mut b = gate.w2.left_mul(e_hat);
    b.iter_mut().zip(&gate.b2).for_each(|(h, c)| *h += c);
    hidden.extend(b);
    let mut z = gate.wg.left_mul(&hidden);
    z.iter_mut().zip(&gate.bg).for_each(|(h, c)| *h += c);
    let g: Vec<f64> = z.into_iter().map(sigmoid).collect();
    let r: Vec<f64> = (0..d)
        .map(|j| residual[j] + g[j] * e[j] + (1.0 - g[j]) * e_hat[j])
        .collect();
    let n = norm(&r);
    let enhanced = if n == 0.0 {
        vec![0.0; d]
    } else {
        r.iter().map(|x| x / n).collect()
    };
    check_finite("enhanced embedding", &enhanced)?;
    Ok(GateTrace {
        hidden,
        g,
        norm: n,
        enhanced,
    })
}

/// Gate values and the enhanced, L2-normalized embedding.
pub fn enhance(
    params: &ExtractorParams,
    e: &[f64],
    e_hat: &[f64],
    kind: GateKind,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = gate_forward(params.gate(kind), e, e, e_hat)?;
    Ok((t.g, t.enhanced))
}

#[derive(Clone, Debug)]
pub struct HeadTrace {
    pub u: Vec<f64>,
    pub logits: [f64; 2],
    pub p: f64,
}

pub fn head_forward(head: &HeadParams, x: &[f64]) -> HeadTrace {
    let mut u = head.u1.left_mul(x);
    u.iter_mut().zip(&head.c1).for_each(|(h, c)| *h += c);
    let l = head.u2.left_mul(&u);
    let logits = [l[0] + head.c2[0], l[1] + head.c2[1]];
    HeadTrace {
        u,
        logits,
        p: sigmoid(logits[1] - logits[0]),
    }
}

/// Positive-class probability of a head applied to an enhanced embedding.
pub fn classify(params: &ExtractorParams, enhanced: &[f64], head: HeadKind) -> f64 {
    head_forward(params.head(head), enhanced).p
}

/// Focal-loss hyperparameters and the weight of the star term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub star_weight: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            gamma: 2.0,
            alpha: 0.25,
            star_weight: 1.0,
        }
    }
}

fn alpha_y(alpha: f64, y: bool) -> f64 {
    if y {
        alpha
    } else {
        1.0 - alpha
    }
}

/// `−α_y (1 − p_y)^γ ln p_y`, where `p` is the positive-class probability.
pub fn focal_loss(p: f64, y: bool, gamma: f64, alpha: f64) -> Result<f64> {
    if gamma < 0.0 || gamma.is_nan() {
        return Err(Error::Validation(format!("focal gamma must be >= 0, got {gamma}")));
    }
    let py = if y { p } else { 1.0 - p }.clamp(PROB_EPS, 1.0 - PROB_EPS);
    Ok(-alpha_y(alpha, y) * (1.0 - py).powf(gamma) * py.ln())
}

/// Derivative of [`focal_loss`] with respect to `p`; zero where the clamp is active.
fn focal_grad_p(p: f64, y: bool, gamma: f64, alpha: f64) -> f64 {
    let py = if y { p } else { 1.0 - p };
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&py) {
        return 0.0;
    }
    let q = 1.0 - py;
    let tilt = if gamma == 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * py.ln()
    };
    let d_py = alpha_y(alpha, y) * (tilt - q.powf(gamma) / py);
    if y {
        d_py
    } else {
        -d_py
    }
}

/// One labeled schema item ready for the gate.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainItem {
    pub e: Vec<f64>,
    pub e_hat: Vec<f64>,
    /// Replaces `e` in the residual term when set.
    pub residual: Option<Vec<f64>>,
    pub label: bool,
}

/// All labeled items of one turn.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TurnExample {
    pub tables: Vec<TrainItem>,
    pub columns: Vec<TrainItem>,
    pub stars: Vec<TrainItem>,
}

impl TurnExample {
    fn groups(&self) -> [(HeadKind, &[TrainItem]); 3] {
        [
            (HeadKind::Table, &self.tables[..]),
            (HeadKind::Column, &self.columns[..]),
            (HeadKind::Star, &self.stars[..]),
        ]
    }
}

fn group_weight(head: HeadKind, n: usize, cfg: &LossConfig) -> f64 {
    let w = if head == HeadKind::Star { cfg.star_weight } else { 1.0 };
    w / n as f64
}

pub fn item_probability(params: &ExtractorParams, item: &TrainItem, head: HeadKind) -> Result<f64> {
    let residual = item.residual.as_deref().unwrap_or(&item.e);
    let gate = gate_forward(params.gate(head.gate()), residual, &item.e, &item.e_hat)?;
    Ok(head_forward(params.head(head), &gate.enhanced).p)
}

/// Mean table term + mean column term + weighted mean star term.
pub fn turn_loss(params: &ExtractorParams, turn: &TurnExample, cfg: &LossConfig) -> Result<f64> {
    let mut total = 0.0;
    for (head, items) in turn.groups() {
        if items.is_empty() {
            continue;
        }
        let w = group_weight(head, items.len(), cfg);
        for item in items {
            let p = item_probability(params, item, head)?;
            total += w * focal_loss(p, item.label, cfg.gamma, cfg.alpha)?;
        }
    }
    Ok(total)
}

/// Mean of [`turn_loss`] over turns.
pub fn batch_loss(params: &ExtractorParams, turns: &[TurnExample], cfg: &LossConfig) -> Result<f64> {
    if turns.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut total = 0.0;
    for t in turns {
        total += turn_loss(params, t, cfg)?;
    }
    Ok(total / turns.len() as f64)
}

/// Loss of [`batch_loss`] and its gradient with respect to every tensor.
/// Items are accumulated sequentially in batch order, so the result is
/// bit-reproducible.
pub fn backward(
    params: &ExtractorParams,
    turns: &[TurnExample],
    cfg: &LossConfig,
) -> Result<(f64, ExtractorParams)> {
    if turns.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    if cfg.gamma < 0.0 || cfg.gamma.is_nan() {
        return Err(Error::Validation(format!("focal gamma must be >= 0, got {}", cfg.gamma)));
    }
    let mut grads = ExtractorParams::zeros(params.d, params.omega);
    let per_turn = 1.0 / turns.len() as f64;
    let mut loss = 0.0;
    for turn in turns {
        for (head, items) in turn.groups() {
            if items.is_empty() {
                continue;
            }
            let w = per_turn * group_weight(head, items.len(), cfg);
            for item in items {
                loss += w * item_backward(params, &mut grads, item, head, w, cfg)?;
            }
        }
    }
    for (name, t) in grads.tensors() {
        check_finite(name, t)?;
    }
    Ok((loss, grads))
}

fn item_backward(
    params: &ExtractorParams,
    grads: &mut ExtractorParams,
    item: &TrainItem,
    head_kind: HeadKind,
    weight: f64,
    cfg: &LossConfig,
) -> Result<f64> {
    let gate_kind = head_kind.gate();
    let gate = params.gate(gate_kind);
    let head = params.head(head_kind);
    let residual = item.residual.as_deref().unwrap_or(&item.e);
    let gt = gate_forward(gate, residual, &item.e, &item.e_hat)?;
    let ht = head_forward(head, &gt.enhanced);
    let p = ht.p;
    let loss = focal_loss(p, item.label, cfg.gamma, cfg.alpha)?;

    let d_delta = weight * focal_grad_p(p, item.label, cfg.gamma, cfg.alpha) * p * (1.0 - p);
    if d_delta == 0.0 {
        return Ok(loss);
    }
    let dl = [-d_delta, d_delta];

    // head
    let hg = grads.head_mut(head_kind);
    hg.c2[0] += dl[0];
    hg.c2[1] += dl[1];
    hg.u2.add_outer(&ht.u, &dl);
    let du = head.u2.right_mul(&dl);
    hg.c1.iter_mut().zip(&du).for_each(|(c, x)| *c += x);
    hg.u1.add_outer(&gt.enhanced, &du);
    let dx = head.u1.right_mul(&du);

    // normalization
    if gt.norm == 0.0 {
        return Ok(loss);
    }
    let proj: f64 = gt.enhanced.iter().zip(&dx).map(|(o, g)| o * g).sum();
    let dr: Vec<f64> = dx
        .iter()
        .zip(&gt.enhanced)
        .map(|(g, o)| (g - o * proj) / gt.norm)
        .collect();

    // gate
    let dz: Vec<f64> = (0..params.d)
        .map(|j| {
            let dg = dr[j] * (item.e[j] - item.e_hat[j]);
            dg * gt.g[j] * (1.0 - gt.g[j])
        })
        .collect();
    let gg = grads.gate_mut(gate_kind);
    gg.bg.iter_mut().zip(&dz).for_each(|(b, x)| *b += x);
    gg.wg.add_outer(&gt.hidden, &dz);
    let dh = gate.wg.right_mul(&dz);
    let (da, db) = dh.split_at(params.d);
    gg.b1.iter_mut().zip(da).for_each(|(b, x)| *b += x);
    gg.w1.add_outer(&item.e, da);
    gg.b2.iter_mut().zip(db).for_each(|(b, x)| *b += x);
    gg.w2.add_outer(&item.e_hat, db);
    Ok(loss)
}
