use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam hyperparameters. Defaults follow Kingma & Ba.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 1e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            t: 0,
        }
    }

    /// One bias-corrected Adam update of `params` from their `grad` slots.
    /// A parameter without a gradient slot is treated as having zero gradient.
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Contract(format!(
                "adam tracks {} parameters, got {}",
                self.m.len(),
                params.len()
            )));
        }
        for (k, p) in params.iter().enumerate() {
            let g_len = p.grad.as_ref().map_or(p.len(), Vec::len);
            if p.len() != self.m[k].len() || g_len != p.len() {
                return Err(Error::Contract(format!(
                    "parameter {k}: value {} / grad {g_len} / state {} lengths disagree",
                    p.len(),
                    self.m[k].len()
                )));
            }
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let Some(grad) = p.grad.clone() else { continue };
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
