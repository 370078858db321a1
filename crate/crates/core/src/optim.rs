use serde::{Deserialize, Serialize};

use crate::param::ParamStore;
use crate::tensor::Tensor;

/// Linear warm-up from `warmup_lr` to `peak_lr`, then cosine decay to
/// `min_lr` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_lr: f64,
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            warmup_lr: lr,
            peak_lr: lr,
            min_lr: lr,
            warmup_steps: 0,
            total_steps: 1,
        }
    }

    pub fn at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            let f = step as f64 / self.warmup_steps as f64;
            return self.warmup_lr + (self.peak_lr - self.warmup_lr) * f;
        }
        let span = self.total_steps.saturating_sub(self.warmup_steps).max(1);
        let f = ((step - self.warmup_steps) as f64 / span as f64).min(1.0);
        self.min_lr + 0.5 * (self.peak_lr - self.min_lr) * (1.0 + (std::f64::consts::PI * f).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.05,
        }
    }
}

/// AdamW with decoupled weight decay. Decay applies to matrices only;
/// vectors (biases, norm gains) are exempt. Frozen parameters are skipped.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub cfg: AdamWConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(cfg: AdamWConfig, store: &ParamStore) -> Self {
        let zeros = || store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Self {
            cfg,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: f64) {
        self.step += 1;
        let c = self.cfg;
        let bc1 = 1.0 - c.beta1.powi(self.step as i32);
        let bc2 = 1.0 - c.beta2.powi(self.step as i32);
        for (i, p) in store.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let decay = if p.value.shape().len() >= 2 { c.weight_decay } else { 0.0 };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *w -= lr * (mh / (vh.sqrt() + c.eps) + decay * *w);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_warms_up_then_decays() {
        let s = LrSchedule {
            warmup_lr: 1e-6,
            peak_lr: 3e-5,
            min_lr: 1e-5,
            warmup_steps: 10,
            total_steps: 110,
        };
        assert_eq!(s.at(0), 1e-6);
        assert!((s.at(10) - 3e-5).abs() < 1e-18);
        assert!((s.at(110) - 1e-5).abs() < 1e-18);
        assert!(s.at(60) < 3e-5 && s.at(60) > 1e-5);
    }

    #[test]
    fn adamw_minimizes_quadratic_and_respects_freeze() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::new(&[2], vec![3.0, -2.0]).unwrap());
        let b = store.add("b", Tensor::new(&[1], vec![5.0]).unwrap());
        store.get_mut(b).trainable = false;
        let mut opt = AdamW::new(AdamWConfig::default(), &store);
        for _ in 0..2000 {
            store.zero_grads();
            let g: Vec<f64> = store.get(a).value.data().iter().map(|x| 2.0 * x).collect();
            store.get_mut(a).grad.data_mut().copy_from_slice(&g);
            store.get_mut(b).grad.data_mut()[0] = 1.0;
            opt.step(&mut store, 1e-2);
        }
        assert!(store.get(a).value.data().iter().all(|x| x.abs() < 1e-2));
        assert_eq!(store.get(b).value.data(), &[5.0]);
    }
}
