//! AdamW with decoupled weight decay, plus learning-rate schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ModelParams;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub weight_decay: f64,
    /// Completed update count.
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamW {
    /// Zeroed moments for tensors of the given lengths.
    pub fn new(lens: impl IntoIterator<Item = usize>, weight_decay: f64) -> Self {
        let (m, v) = lens.into_iter().map(|n| (vec![0.0; n], vec![0.0; n])).unzip();
        Self {
            weight_decay,
            step: 0,
            m,
            v,
        }
    }

    pub fn for_params(params: &ModelParams, weight_decay: f64) -> Self {
        Self::new(params.tensors.iter().map(|t| t.data.len()), weight_decay)
    }

    /// One update over `(values, grads, decays)` triples, in the same order
    /// the state was created with.
    pub fn step<'a>(
        &mut self,
        tensors: impl IntoIterator<Item = (&'a mut [f64], &'a [f64], bool)>,
        lr: f64,
    ) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - BETA1.powi(t);
        let bc2 = 1.0 - BETA2.powi(t);
        let mut seen = 0;
        for (i, (theta, g, decay)) in tensors.into_iter().enumerate() {
            seen += 1;
            let (m, v) = match (self.m.get_mut(i), self.v.get_mut(i)) {
                (Some(m), Some(v)) if m.len() == theta.len() && g.len() == theta.len() => (m, v),
                _ => return Err(Error::Shape(format!("optimizer state does not match tensor {i}"))),
            };
            let wd = if decay { self.weight_decay } else { 0.0 };
            for j in 0..theta.len() {
                m[j] = BETA1 * m[j] + (1.0 - BETA1) * g[j];
                v[j] = BETA2 * v[j] + (1.0 - BETA2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                theta[j] -= lr * (m_hat / (v_hat.sqrt() + EPS) + wd * theta[j]);
            }
        }
        if seen != self.m.len() {
            return Err(Error::Shape(format!(
                "optimizer holds {} tensors, got {seen}",
                self.m.len()
            )));
        }
        Ok(())
    }

    pub fn step_params(&mut self, params: &mut ModelParams, lr: f64) -> Result<()> {
        let items = params
            .tensors
            .iter_mut()
            .zip(&params.grads)
            .map(|(t, g)| (t.data.as_mut_slice(), g.as_slice(), t.decay));
        self.step(items, lr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrDecay {
    None,
    #[default]
    Linear,
}

/// Learning rate for 0-based `step` out of `total` steps.
pub fn lr_at(base: f64, decay: LrDecay, step: u64, total: u64) -> f64 {
    match decay {
        LrDecay::None => base,
        LrDecay::Linear => {
            if total == 0 {
                base
            } else {
                base * (1.0 - step.min(total) as f64 / total as f64)
            }
        }
    }
}

/// Rescales gradients in place so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(params: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = params.grad_norm();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in params.grads.iter_mut().flatten() {
            *g *= s;
        }
    }
    norm
}
