//! Bias-corrected Adam.

use alloc::vec::Vec;

use crate::math;
use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment buffers for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamBuffers {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamBuffers {
    pub fn new(len: usize) -> Self {
        AdamBuffers { m: alloc::vec![0.0; len], v: alloc::vec![0.0; len] }
    }
}

/// One Adam update at step `t` (1-based).
pub fn adam_update(params: &mut [f64], grads: &[f64], buf: &mut AdamBuffers, t: u64, lr: f64, cfg: AdamConfig) {
    debug_assert_eq!(params.len(), grads.len());
    let bc1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let bc2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for i in 0..params.len() {
        let g = grads[i];
        buf.m[i] = cfg.beta1 * buf.m[i] + (1.0 - cfg.beta1) * g;
        buf.v[i] = cfg.beta2 * buf.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = buf.m[i] / bc1;
        let v_hat = buf.v[i] / bc2;
        params[i] -= lr * m_hat / (math::sqrt(v_hat) + cfg.eps);
    }
}

/// Adam state mirroring the six parameter tensors.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub buffers: Vec<AdamBuffers>,
    pub config: AdamConfig,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        OptimizerState {
            step: 0,
            buffers: params.tensors().iter().map(|t| AdamBuffers::new(t.as_slice().len())).collect(),
            config,
        }
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut OptimizerState, lr: f64) {
    state.step += 1;
    let grads = grads.tensors();
    for ((p, g), buf) in params.tensors_mut().into_iter().zip(grads).zip(state.buffers.iter_mut()) {
        adam_update(p.as_mut_slice(), g.as_slice(), buf, state.step, lr, state.config);
    }
}
