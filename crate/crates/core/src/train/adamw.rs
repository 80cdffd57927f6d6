//! AdamW with decoupled weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::train::bptt::GradientSet;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 1e-2,
        }
    }
}

/// First/second moment accumulators plus the step counter.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl OptimizerState {
    pub fn new(config: AdamWConfig, shapes: &[&Matrix]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            v: shapes.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One decoupled-weight-decay adaptive-moment update, in place.
///
/// Deterministic given the state; rejects non-finite gradients with a
/// diagnostic naming the first offending layer.
pub fn adamw_step(
    weights: &mut [Matrix],
    grads: &GradientSet,
    state: &mut OptimizerState,
) -> Result<()> {
    if weights.len() != grads.layers.len() || weights.len() != state.m.len() {
        return Err(Error::Topology(format!(
            "optimizer shape mismatch: {} weights, {} grads, {} moment sets",
            weights.len(),
            grads.layers.len(),
            state.m.len()
        )));
    }
    for (l, g) in grads.layers.iter().enumerate() {
        if !weights[l].same_shape(g) {
            return Err(Error::Topology(format!("gradient shape mismatch at layer {l}")));
        }
        if !g.is_finite() {
            return Err(Error::Training(format!(
                "non-finite gradient in layer {l} at optimizer step {}",
                state.step + 1
            )));
        }
    }

    state.step += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);

    for l in 0..weights.len() {
        let w = weights[l].as_mut_slice();
        let g = grads.layers[l].as_slice();
        let m = state.m[l].as_mut_slice();
        let v = state.v[l].as_mut_slice();
        for i in 0..w.len() {
            m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
            v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            w[i] -= c.learning_rate * (m_hat / (v_hat.sqrt() + c.epsilon) + c.weight_decay * w[i]);
        }
    }
    Ok(())
}
