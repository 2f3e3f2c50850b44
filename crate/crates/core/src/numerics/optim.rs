use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::NumericsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Classic L2 penalty folded into the gradient (0 disables it).
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store
            .entries()
            .iter()
            .map(|e| vec![0.0; e.tensor.len()])
            .collect();
        Self {
            step: 0,
            config,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn first_moment(&self, index: usize) -> &[f64] {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &[f64] {
        &self.v[index]
    }
}

/// One bias-corrected Adam update applied in place. Frozen entries are skipped.
pub fn adam_step(store: &mut ParamStore, grads: &[Vec<f64>], state: &mut AdamState) -> Result<(), NumericsError> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(NumericsError::Invalid(format!(
            "adam: {} gradients / {} moments for {} parameters",
            grads.len(),
            state.m.len(),
            store.len()
        )));
    }
    for (e, g) in store.entries().iter().zip(grads) {
        if g.len() != e.tensor.len() {
            return Err(NumericsError::ShapeMismatch {
                op: "adam",
                left: e.tensor.shape().to_vec(),
                right: vec![g.len()],
            });
        }
        if g.iter().any(|v| !v.is_finite()) {
            return Err(NumericsError::NonFiniteGrad(e.name.clone()));
        }
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - c.beta1.powi(t);
    let bc2 = 1.0 - c.beta2.powi(t);
    for (i, g) in grads.iter().enumerate() {
        let entry = store.entry_mut(i);
        if !entry.trainable {
            continue;
        }
        let p = entry.tensor.data_mut();
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for k in 0..p.len() {
            let gk = g[k] + c.weight_decay * p[k];
            m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
            v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
            let mhat = m[k] / bc1;
            let vhat = v[k] / bc2;
            p[k] -= c.lr * mhat / (vhat.sqrt() + c.eps);
        }
    }
    Ok(())
}
