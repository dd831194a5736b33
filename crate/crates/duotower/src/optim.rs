//! AdamW with decoupled weight decay and a warmup + cosine learning rate.

use parabench_core::Scalar;
use serde::{Deserialize, Serialize};

use crate::params::{Grads, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.98, eps: 1e-6, weight_decay: 0.1 }
    }
}

impl AdamWConfig {
    pub fn is_valid(&self) -> bool {
        (0.0..1.0).contains(&self.beta1)
            && self.beta1 > 0.0
            && (0.0..1.0).contains(&self.beta2)
            && self.beta2 > 0.0
            && self.eps > 0.0
            && self.weight_decay >= 0.0
    }
}

/// First and second moment estimates, one buffer per tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamWState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamWState<T> {
    pub fn new(store: &ParamStore<T>) -> Self {
        let zeros = || store.iter().map(|(_, p)| vec![T::zero(); p.len()]).collect();
        Self { m: zeros(), v: zeros() }
    }
}

/// One update at 1-based `step`:
/// `θ ← θ − lr · (m̂ / (√v̂ + ε) + wd · θ)`. Frozen tensors are skipped and
/// tensors with `decay == false` get no weight decay.
pub fn adamw_step<T: Scalar>(store: &mut ParamStore<T>, grads: &Grads<T>, state: &mut AdamWState<T>, step: u64, lr: f64, cfg: &AdamWConfig) {
    assert!(step >= 1, "steps are 1-based");
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let bc1 = T::one() - T::lit(cfg.beta1.powf(step as f64));
    let bc2 = T::one() - T::lit(cfg.beta2.powf(step as f64));
    let (eps, lr) = (T::lit(cfg.eps), T::lit(lr));
    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    for id in ids {
        let p = store.get_mut(id);
        if p.frozen {
            continue;
        }
        let wd = if p.decay { T::lit(cfg.weight_decay) } else { T::zero() };
        let g = grads.get(id);
        let (m, v) = (&mut state.m[id.0], &mut state.v[id.0]);
        for i in 0..p.data.len() {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let theta = p.data[i];
            p.data[i] = theta - lr * (m_hat / (v_hat.sqrt() + eps) + wd * theta);
        }
    }
}

/// Linear warmup from 0 to `base_lr`, then half-cosine decay to 0 at
/// `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
}

impl LrSchedule {
    pub fn lr_at(&self, step: u64) -> f64 {
        if step < self.warmup_steps {
            return self.base_lr * step as f64 / self.warmup_steps as f64;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1) as f64;
        let progress = ((step - self.warmup_steps) as f64 / span).min(1.0);
        self.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
