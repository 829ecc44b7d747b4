//! Adam / AdamW over a [`ParamStore`].

use std::collections::BTreeMap;

use crate::error::Result;
use crate::nn::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OptimizerConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    /// Decoupled weight decay (AdamW). Zero for plain Adam.
    pub weight_decay: f32,
}

impl OptimizerConfig {
    /// First-stage autoencoder preset: Adam(0.5, 0.9), base LR scaled by the
    /// caller per batch size.
    pub fn dvae(lr: f32) -> OptimizerConfig {
        OptimizerConfig {
            lr,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }

    /// Second-stage transformer preset: AdamW(0.9, 0.999), wd 0.01.
    pub fn transformer(lr: f32) -> OptimizerConfig {
        OptimizerConfig {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: OptimizerConfig,
    pub step_count: u64,
    m: BTreeMap<String, Vec<f32>>,
    v: BTreeMap<String, Vec<f32>>,
}

impl Adam {
    pub fn new(cfg: OptimizerConfig) -> Adam {
        Adam {
            cfg,
            step_count: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Apply one update from the grads currently held in the store, then
    /// clear them.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as f64;
        let bc1 = 1.0 - (self.cfg.beta1 as f64).powf(t);
        let bc2 = 1.0 - (self.cfg.beta2 as f64).powf(t);
        for (name, entry) in store.iter_mut() {
            let Some(grad) = entry.grad.take() else {
                continue;
            };
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            for i in 0..grad.len() {
                m[i] = self.cfg.beta1 * m[i] + (1.0 - self.cfg.beta1) * grad[i];
                v[i] = self.cfg.beta2 * v[i] + (1.0 - self.cfg.beta2) * grad[i] * grad[i];
                let m_hat = m[i] as f64 / bc1;
                let v_hat = v[i] as f64 / bc2;
                let mut update = self.cfg.lr as f64 * m_hat / (v_hat.sqrt() + self.cfg.eps as f64);
                if self.cfg.weight_decay > 0.0 {
                    update += (self.cfg.lr * self.cfg.weight_decay * entry.value[i]) as f64;
                }
                entry.value[i] -= update as f32;
            }
        }
        Ok(())
    }

    /// Moment buffers for checkpointing, flattened as (name, m, v).
    pub fn state(&self) -> Vec<(String, Vec<f32>, Vec<f32>)> {
        self.m
            .iter()
            .map(|(k, m)| (k.clone(), m.clone(), self.v[k].clone()))
            .collect()
    }

    pub fn restore(&mut self, step_count: u64, state: Vec<(String, Vec<f32>, Vec<f32>)>) {
        self.step_count = step_count;
        self.m.clear();
        self.v.clear();
        for (k, m, v) in state {
            self.m.insert(k.clone(), m);
            self.v.insert(k, v);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Init, ParamSpec, ParamStore};
    use d2it_tensor::RngStream;

    /// Adam on a quadratic converges toward the minimum.
    #[test]
    fn adam_descends_quadratic() {
        let specs = vec![ParamSpec::new("x", &[2], Init::Ones)];
        let mut rng = RngStream::new(1, 0);
        let mut store = ParamStore::init(&specs, &mut rng);
        let mut opt = Adam::new(OptimizerConfig::transformer(0.05));
        for _ in 0..200 {
            let x = store.get("x").unwrap().value.clone();
            // d/dx of (x - 3)^2
            let grad: Vec<f32> = x.iter().map(|&v| 2.0 * (v - 3.0)).collect();
            store.accumulate_grad("x", grad).unwrap();
            opt.step(&mut store).unwrap();
        }
        for &v in &store.get("x").unwrap().value {
            assert!((v - 3.0).abs() < 0.5, "{v}");
        }
    }

    #[test]
    fn missing_grads_leave_params_untouched() {
        let specs = vec![ParamSpec::new("x", &[2], Init::Ones)];
        let mut rng = RngStream::new(1, 0);
        let mut store = ParamStore::init(&specs, &mut rng);
        let mut opt = Adam::new(OptimizerConfig::dvae(0.1));
        opt.step(&mut store).unwrap();
        assert_eq!(store.get("x").unwrap().value, vec![1.0, 1.0]);
    }
}
