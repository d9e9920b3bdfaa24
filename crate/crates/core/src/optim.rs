//! Adam with L2 weight decay folded into the gradient (not the decoupled
//! AdamW form).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for one parameter matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub m: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl Moments {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            m: DMatrix::zeros(rows, cols),
            v: DMatrix::zeros(rows, cols),
        }
    }
}

/// One descent step on `param` at 1-based step `t`.
pub fn adam_update(param: &mut DMatrix<f64>, grad: &DMatrix<f64>, moments: &mut Moments, t: u64, cfg: &AdamConfig) {
    debug_assert_eq!(param.shape(), grad.shape());
    let bc1 = 1.0 - cfg.beta1.powf(t as f64);
    let bc2 = 1.0 - cfg.beta2.powf(t as f64);
    for idx in 0..param.len() {
        let g = grad[idx] + cfg.weight_decay * param[idx];
        let m = cfg.beta1 * moments.m[idx] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * moments.v[idx] + (1.0 - cfg.beta2) * g * g;
        moments.m[idx] = m;
        moments.v[idx] = v;
        let m_hat = m / bc1;
        let v_hat = v / bc2;
        param[idx] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}
