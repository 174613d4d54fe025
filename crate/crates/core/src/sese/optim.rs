use serde::{Deserialize, Serialize};

use super::params::ExtractorParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub eps: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 5e-3,
            beta1: 0.9,
            beta2: 0.999,
            weight_decay: 0.01,
            eps: 1e-8,
        }
    }
}

/// Step count and both moment estimates, flattened in
/// [`ExtractorParams::tensors`] order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamWState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One AdamW update with decoupled weight decay: the parameter first
/// shrinks by `lr · weight_decay`, then takes the bias-corrected Adam step.
pub fn adamw_step(
    params: &mut ExtractorParams,
    grads: &ExtractorParams,
    state: &mut AdamWState,
    cfg: &AdamWConfig,
) {
    let n = params.num_parameters();
    if state.m.len() != n {
        state.m = vec![0.0; n];
        state.v = vec![0.0; n];
        state.step = 0;
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let mut k = 0;
    for ((_, p), (_, g)) in params.tensors_mut().into_iter().zip(grads.tensors()) {
        for (x, gi) in p.iter_mut().zip(g) {
            *x -= cfg.lr * cfg.weight_decay * *x;
            let m = &mut state.m[k];
            let v = &mut state.v[k];
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * gi;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *x -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            k += 1;
        }
    }
}
