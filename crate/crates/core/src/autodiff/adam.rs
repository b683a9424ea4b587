use super::param::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments for every parameter of one [`ParamStore`], in store order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = |s: &ParamStore| s.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            step: 0,
            m: zeros(store),
            v: zeros(store),
        }
    }

    fn check(&self, store: &ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Shape {
                op: "adam_step",
                detail: format!("{} moments for {} parameters", self.m.len(), store.len()),
            });
        }
        for ((_, p), m) in store.iter().zip(&self.m) {
            if p.value.shape() != m.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    detail: format!("moment {:?} for parameter {} {:?}", m.shape(), p.name, p.value.shape()),
                });
            }
        }
        Ok(())
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        self.step_where(store, |_| true)
    }

    /// Adam update restricted to parameters accepted by `trainable`.
    /// Rejected parameters and their moments are left untouched.
    pub fn step_where(&mut self, store: &mut ParamStore, trainable: impl Fn(ParamId) -> bool) -> Result<()> {
        self.check(store)?;
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (i, p) in store.iter_mut().enumerate() {
            if !trainable(ParamId(i)) {
                continue;
            }
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = p.grad.data();
            for (j, w) in p.value.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
