//! AdamW with decoupled weight decay, global-norm clipping and polynomial decay.

use ogrg_tensor::{no_grad, Real, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// `λ0·(1 − t/T)^p`, with `t` clamped to `[0, T]`.
pub fn poly_lr(t: u64, total: u64, base: f64, power: f64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let frac = (t.min(total) as f64) / total as f64;
    base * (1.0 - frac).powf(power)
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Global gradient-norm ceiling; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: Some(5.0),
        }
    }
}

/// Moment estimates for an ordered parameter list.
pub struct AdamW<T: Real> {
    pub cfg: AdamWConfig,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> AdamW<T> {
    pub fn new(cfg: AdamWConfig, params: &[Tensor<T>]) -> Self {
        AdamW {
            cfg,
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            t: 0,
        }
    }

    /// Applies one update with rate `lr`; returns the pre-clipping gradient norm.
    /// A non-finite gradient aborts the step before anything changes.
    pub fn step(&mut self, params: &[Tensor<T>], lr: f64) -> Result<f64> {
        if params.len() != self.m.len() {
            return Err(CoreError::Contract(format!("optimizer tracks {} tensors, got {}", self.m.len(), params.len())));
        }
        let grads: Vec<Option<Vec<T>>> = params.iter().map(Tensor::grad).collect();
        let mut sq = 0.0;
        for g in grads.iter().flatten() {
            for &x in g {
                let x = x.as_f64();
                if !x.is_finite() {
                    return Err(CoreError::Numeric("non-finite gradient; step refused".into()));
                }
                sq += x * x;
            }
        }
        let norm = sq.sqrt();
        let clip = match self.cfg.clip_norm {
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        self.t += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        no_grad(|| {
            for (i, p) in params.iter().enumerate() {
                let mut data = p.data_mut();
                let (m, v) = (&mut self.m[i], &mut self.v[i]);
                let g = grads[i].as_deref();
                for j in 0..data.len() {
                    let gj = g.map_or(0.0, |g| g[j].as_f64()) * clip;
                    let mj = c.beta1 * m[j].as_f64() + (1.0 - c.beta1) * gj;
                    let vj = c.beta2 * v[j].as_f64() + (1.0 - c.beta2) * gj * gj;
                    m[j] = T::lit(mj);
                    v[j] = T::lit(vj);
                    let mut x = data[j].as_f64();
                    x -= lr * c.weight_decay * x;
                    x -= lr * (mj / bc1) / ((vj / bc2).sqrt() + c.eps);
                    data[j] = T::lit(x);
                }
            }
        });
        Ok(norm)
    }
}
