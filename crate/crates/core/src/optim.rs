//! Adam with linear warmup followed by inverse-square-root decay.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, GwtError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub base_lr: f64,
    pub warmup_steps: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            base_lr: 5e-4,
            warmup_steps: 4000,
        }
    }
}

/// Learning rate at 1-based `step`: `base·step/warmup` during warmup, then
/// `base·√(warmup/step)`. Both branches give `base` at `step == warmup`.
pub fn lr_at(cfg: &ScheduleConfig, step: u64) -> Result<f64> {
    if step == 0 {
        return invalid("learning-rate steps are 1-based");
    }
    if cfg.base_lr.is_nan() || cfg.base_lr <= 0.0 || cfg.warmup_steps == 0 {
        return invalid("schedule needs base_lr > 0 and warmup_steps >= 1");
    }
    let (s, w) = (step as f64, cfg.warmup_steps as f64);
    Ok(if step <= cfg.warmup_steps {
        cfg.base_lr * s / w
    } else {
        cfg.base_lr * (w / s).sqrt()
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers for a list of flat tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// Completed updates.
    pub step: u64,
}

impl Adam {
    pub fn new(sizes: &[usize], config: AdamConfig) -> Self {
        Self {
            config,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// One bias-corrected update. Gradients are checked for finiteness
    /// before anything is touched; the offending tensor's name is returned.
    pub fn update(&mut self, params: Vec<&mut [f64]>, grads: &[(&str, &[f64])], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(GwtError::InvalidState(
                "parameter list does not match optimizer state".into(),
            ));
        }
        for (i, (name, g)) in grads.iter().enumerate() {
            if g.len() != self.m[i].len() || params[i].len() != g.len() {
                return Err(GwtError::InvalidState(format!("shape mismatch for {name}")));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(GwtError::NonFinite {
                    name: (*name).to_string(),
                });
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, p) in params.into_iter().enumerate() {
            let g = grads[i].1;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                p[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
