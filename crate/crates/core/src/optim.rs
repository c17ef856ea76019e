//! SGD with momentum, Adam, and the linear-warmup / cosine-decay learning
//! rate schedule. Schedules are evaluated per optimizer step.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{EntryKind, Gradients, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub lr_start: f64,
    pub lr_peak: f64,
    pub lr_min: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub steps_per_epoch: usize,
}

impl Schedule {
    /// SSL pretraining: 1e-4 up to 0.3 over 10 epochs, cosine down to 1e-4 at epoch 100.
    pub fn pretrain(steps_per_epoch: usize) -> Self {
        Schedule { lr_start: 1e-4, lr_peak: 0.3, lr_min: 1e-4, warmup_epochs: 10, total_epochs: 100, steps_per_epoch }
    }

    /// Downstream training: 1e-5 up to 1e-3 over 10 epochs, cosine down to 1e-5 at epoch 100.
    pub fn downstream(steps_per_epoch: usize) -> Self {
        Schedule { lr_start: 1e-5, lr_peak: 1e-3, lr_min: 1e-5, warmup_epochs: 10, total_epochs: 100, steps_per_epoch }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |detail: &str| Err(Error::config("schedule", detail));
        if !(self.warmup_epochs > 0 && self.warmup_epochs < self.total_epochs) {
            return bad("need 0 < warmup_epochs < total_epochs");
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be positive");
        }
        let lrs = [self.lr_start, self.lr_peak, self.lr_min];
        if lrs.iter().any(|v| !v.is_finite() || *v < 0.0) || self.lr_start > self.lr_peak || self.lr_min > self.lr_peak {
            return bad("learning rates must be finite, non-negative, and at most lr_peak");
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        self.warmup_epochs * self.steps_per_epoch
    }

    pub fn total_steps(&self) -> usize {
        self.total_epochs * self.steps_per_epoch
    }
}

/// Learning rate at `step`, for `0 <= step <= total_steps`.
pub fn lr_at(s: &Schedule, step: usize) -> Result<f64> {
    s.validate()?;
    let (warm, total) = (s.warmup_steps(), s.total_steps());
    if step > total {
        return Err(Error::InvalidArgument(format!("step {step} beyond schedule end {total}")));
    }
    if step <= warm {
        let t = step as f64 / warm as f64;
        return Ok(s.lr_start + (s.lr_peak - s.lr_start) * t);
    }
    let p = (step - warm) as f64 / (total - warm) as f64;
    Ok(s.lr_min + 0.5 * (s.lr_peak - s.lr_min) * (1.0 + (PI * p).cos()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum OptimizerConfig {
    Sgd {
        #[serde(default = "default_momentum")]
        momentum: f64,
        #[serde(default = "default_sgd_decay")]
        weight_decay: f64,
    },
    Adam {
        #[serde(default = "default_beta1")]
        beta1: f64,
        #[serde(default = "default_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_eps")]
        eps: f64,
        #[serde(default)]
        weight_decay: f64,
    },
}

fn default_momentum() -> f64 {
    0.9
}
fn default_sgd_decay() -> f64 {
    1e-4
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_adam_eps() -> f64 {
    1e-8
}

impl OptimizerConfig {
    pub fn sgd() -> Self {
        OptimizerConfig::Sgd { momentum: default_momentum(), weight_decay: default_sgd_decay() }
    }

    pub fn adam() -> Self {
        OptimizerConfig::Adam { beta1: default_beta1(), beta2: default_beta2(), eps: default_adam_eps(), weight_decay: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerConfig::Sgd { momentum, weight_decay } => (0.0..1.0).contains(&momentum) && weight_decay >= 0.0,
            OptimizerConfig::Adam { beta1, beta2, eps, weight_decay } => {
                (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0 && weight_decay >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config("optimizer", "hyperparameters out of range"))
        }
    }

    /// Applies one update with this optimizer's hyperparameters.
    pub fn step(&self, params: &mut ParamStore, grads: &Gradients, state: &mut OptState, lr: f64) -> Result<()> {
        match *self {
            OptimizerConfig::Sgd { momentum, weight_decay } => sgd_step(params, grads, state, lr, momentum, weight_decay),
            OptimizerConfig::Adam { beta1, beta2, eps, weight_decay } => {
                adam_step(params, grads, state, lr, beta1, beta2, eps, weight_decay)
            }
        }
    }
}

/// Momentum / first-moment and second-moment buffers, aligned with the
/// parameter store. SGD uses only `first`.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptState {
    pub fn new(params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.entries().iter().map(|e| vec![0.0; e.values.len()]).collect();
        OptState { first: zeros.clone(), second: zeros, step: 0 }
    }
}

fn check_shapes(params: &ParamStore, grads: &Gradients, state: &OptState) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.first.len() != n || state.second.len() != n {
        return Err(Error::shape(format!("optimizer given {} gradients and {} state slots for {n} entries", grads.len(), state.first.len())));
    }
    for (i, e) in params.entries().iter().enumerate() {
        let len = e.values.len();
        if grads.at(i).len() != len || state.first[i].len() != len || state.second[i].len() != len {
            return Err(Error::shape(format!("gradient or state for {} does not match its {len} values", e.name)));
        }
    }
    Ok(())
}

fn decays(kind: EntryKind) -> bool {
    kind == EntryKind::Weight
}

/// `g' = g + wd*theta` (weights only), `v = m*v + g'`, `theta -= lr*v`.
/// Entries that are buffers or have `requires_grad` unset are left alone.
pub fn sgd_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut OptState,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) -> Result<()> {
    check_shapes(params, grads, state)?;
    state.step += 1;
    for i in 0..params.len() {
        let e = &params.entries()[i];
        if !e.is_trainable() || !e.requires_grad {
            continue;
        }
        let wd = if decays(e.kind) { weight_decay } else { 0.0 };
        let g = grads.at(i);
        let v = &mut state.first[i];
        for ((theta, vj), &gj) in params.values_at_mut(i).iter_mut().zip(v.iter_mut()).zip(g) {
            *vj = momentum * *vj + gj + wd * *theta;
            *theta -= lr * *vj;
        }
    }
    Ok(())
}

/// Bias-corrected Adam. `weight_decay` is added to the gradient (L2 form).
#[allow(clippy::too_many_arguments)]
pub fn adam_step(
    params: &mut ParamStore,
    grads: &Gradients,
    state: &mut OptState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
) -> Result<()> {
    check_shapes(params, grads, state)?;
    state.step += 1;
    let t = state.step as i32;
    let (c1, c2) = (1.0 - beta1.powi(t), 1.0 - beta2.powi(t));
    for i in 0..params.len() {
        let e = &params.entries()[i];
        if !e.is_trainable() || !e.requires_grad {
            continue;
        }
        let wd = if decays(e.kind) { weight_decay } else { 0.0 };
        let g = grads.at(i);
        let (m, v) = (&mut state.first[i], &mut state.second[i]);
        for (j, theta) in params.values_at_mut(i).iter_mut().enumerate() {
            let gj = g[j] + wd * *theta;
            m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
            v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
            *theta -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
        }
    }
    Ok(())
}
