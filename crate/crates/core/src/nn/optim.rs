//! Adam with global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use super::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// Maximum global L2 norm of the gradient.
    pub clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            clip: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Matrix>,
    pub second: Vec<Matrix>,
}

impl AdamState {
    pub fn new(params: &[Matrix]) -> Self {
        let zeros: Vec<Matrix> = params.iter().map(|p| Matrix::zeros(p.rows, p.cols)).collect();
        Self {
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }
}

pub fn global_norm(grads: &[Matrix]) -> f64 {
    grads.iter().map(Matrix::sum_squares).sum::<f64>().sqrt()
}

/// Scales `grads` in place so their global norm is at most `clip`.
/// Returns the factor applied.
pub fn clip_global_norm(grads: &mut [Matrix], clip: f64) -> f64 {
    let norm = global_norm(grads);
    if norm <= clip || norm == 0.0 {
        return 1.0;
    }
    let factor = clip / norm;
    for g in grads.iter_mut() {
        g.scale(factor);
    }
    factor
}

/// One clipped Adam update. Returns the global gradient norm before clipping.
pub fn adam_step(params: &mut [Matrix], mut grads: Vec<Matrix>, state: &mut AdamState, cfg: &AdamConfig) -> f64 {
    assert_eq!(params.len(), grads.len());
    let norm = global_norm(&grads);
    clip_global_norm(&mut grads, cfg.clip);
    state.step += 1;
    let t = state.step as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(&grads)
        .zip(&mut state.first)
        .zip(&mut state.second)
    {
        assert_eq!(p.shape(), g.shape());
        for i in 0..p.data.len() {
            let gi = g.data[i];
            m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
            v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
            let m_hat = m.data[i] / bias1;
            let v_hat = v.data[i] / bias2;
            p.data[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    norm
}
