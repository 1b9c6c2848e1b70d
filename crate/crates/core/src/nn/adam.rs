use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::params::ParamSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.0005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// Adam moments for one parameter set, in `ParamSet::params` order.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
    pub t: u64,
}

impl AdamState {
    pub fn new<P: ParamSet>(params: &P, config: AdamConfig) -> Self {
        let zeros: Vec<Matrix> = params.params().iter().map(|(_, m)| m.zeros_like()).collect();
        AdamState {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One bias-corrected Adam step. Rejects non-finite gradients without
    /// touching the parameters.
    pub fn update<P: ParamSet>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_tensors = grads.params();
        if grad_tensors.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: state holds {} tensors, gradients have {}",
                self.m.len(),
                grad_tensors.len()
            )));
        }
        for ((name, g), m) in grad_tensors.iter().zip(&self.m) {
            if g.shape() != m.shape() {
                return Err(Error::Shape(format!("adam: gradient {name} has shape {:?}", g.shape())));
            }
            if !g.is_finite() {
                return Err(Error::Divergence(format!("non-finite gradient in {name}")));
            }
        }

        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (((p, (_, g)), m), v) in params
            .params_mut()
            .into_iter()
            .zip(grad_tensors)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let p = p.as_mut_slice();
            let m = m.as_mut_slice();
            let v = v.as_mut_slice();
            for (k, &gk) in g.as_slice().iter().enumerate() {
                m[k] = beta1 * m[k] + (1.0 - beta1) * gk;
                v[k] = beta2 * v[k] + (1.0 - beta2) * gk * gk;
                let m_hat = m[k] / bc1;
                let v_hat = v[k] / bc2;
                p[k] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
