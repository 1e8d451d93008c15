//! AdamW with decoupled weight decay and a cosine learning-rate schedule.

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Linear warm-up length in steps before the cosine decay starts.
    pub warmup_steps: usize,
    /// Floor of the schedule as a fraction of `lr`.
    pub min_lr_ratio: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 2e-4, weight_decay: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8, warmup_steps: 0, min_lr_ratio: 0.0 }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidArgument("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 || self.eps <= 0.0 || !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return Err(Error::InvalidArgument("bad weight decay, eps or min_lr_ratio".into()));
        }
        Ok(())
    }

    /// Learning rate of 0-based `step` out of `total` steps.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr * (step + 1) as f64 / self.warmup_steps as f64;
        }
        let span = total.saturating_sub(self.warmup_steps).max(1) as f64;
        let t = ((step - self.warmup_steps) as f64 / span).min(1.0);
        let floor = self.lr * self.min_lr_ratio;
        floor + (self.lr - floor) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
    }
}

#[derive(Clone, Debug)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros: Vec<Tensor> = store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Ok(Self { config, m: zeros.clone(), v: zeros, t: 0 })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update with learning rate `lr`. Decay applies only to tensors flagged for it.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor], lr: f64) -> Result<()> {
        if grads.len() != self.m.len() {
            return Err(Error::Shape(format!("{} gradients for {} parameters", grads.len(), self.m.len())));
        }
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (((p, g), m), v) in store.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if g.shape() != p.value.shape() {
                return Err(Error::Shape(format!("gradient shape {:?} for {}", g.shape(), p.name)));
            }
            let decay = if p.decay { lr * c.weight_decay } else { 0.0 };
            for (((w, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= decay * *w + lr * mhat / (vhat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::Init;

    #[test]
    fn cosine_schedule_endpoints() {
        let c = AdamWConfig::default();
        assert_eq!(c.lr_at(0, 100), 2e-4);
        assert!((c.lr_at(50, 100) - 1e-4).abs() < 1e-18);
        assert!(c.lr_at(100, 100).abs() < 1e-20);
        let w = AdamWConfig { warmup_steps: 10, ..c };
        assert!((w.lr_at(0, 100) - 2e-5).abs() < 1e-18);
        assert_eq!(w.lr_at(10, 100), 2e-4);
    }

    #[test]
    fn first_step_moves_by_lr_and_decays() {
        let mut store = ParamStore::new();
        let a = store.register("w", &[2], Init::Constant(1.0), true);
        let b = store.register("b", &[2], Init::Constant(1.0), false);
        let mut opt = AdamW::new(AdamWConfig { lr: 0.1, ..Default::default() }, &store).unwrap();
        let g = vec![Tensor::new(&[2], vec![3.0, -2.0]).unwrap(), Tensor::new(&[2], vec![0.5, 0.0]).unwrap()];
        opt.step(&mut store, &g, 0.1).unwrap();
        // Adam's first step has magnitude lr regardless of gradient scale
        let wa = store.get(a).data();
        assert!((wa[0] - (1.0 - 0.1 * 0.05 - 0.1)).abs() < 1e-6);
        assert!((wa[1] - (1.0 - 0.1 * 0.05 + 0.1)).abs() < 1e-6);
        let wb = store.get(b).data();
        assert!((wb[0] - 0.9).abs() < 1e-6);
        assert_eq!(wb[1], 1.0);
        assert!(AdamW::new(AdamWConfig { lr: 0.0, ..Default::default() }, &store).is_err());
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut store = ParamStore::new();
        let id = store.register("x", &[3], Init::Constant(5.0), false);
        let mut opt = AdamW::new(AdamWConfig { lr: 0.1, ..Default::default() }, &store).unwrap();
        for s in 0..500 {
            let g = store.get(id).scale(2.0);
            let lr = opt.config.lr_at(s, 500);
            opt.step(&mut store, &[g], lr).unwrap();
        }
        assert!(store.get(id).max_abs() < 1e-2);
    }
}
