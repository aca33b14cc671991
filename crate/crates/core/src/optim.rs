//! Adam optimizer and step-halving learning-rate schedule.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::params::ParameterStore;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moments per parameter plus the step count.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub cfg: AdamConfig,
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig, params: &ParameterStore) -> Self {
        let zeros = || -> BTreeMap<String, Tensor> {
            params.iter().map(|(k, t)| (k.into(), Tensor::zeros(t.shape()))).collect()
        };
        Adam { cfg, step: 0, m: zeros(), v: zeros() }
    }

    /// One bias-corrected update. `grads` must name every parameter; a
    /// non-finite gradient aborts before anything is modified.
    pub fn update(&mut self, params: &mut ParameterStore, grads: &[(String, Tensor)], lr: f64) -> Result<()> {
        let grads: BTreeMap<&str, &Tensor> = grads.iter().map(|(k, g)| (k.as_str(), g)).collect();
        for (name, p) in params.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::Contract(format!("missing gradient for {name}")))?;
            if g.shape() != p.shape() {
                return shape_err("adam", g.shape(), p.shape());
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of {name}")));
            }
        }
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - libm::pow(beta1, self.step as f64);
        let c2 = 1.0 - libm::pow(beta2, self.step as f64);
        for (name, p) in params.iter_mut() {
            let g = grads[name].data();
            let m = self.m.get_mut(name).ok_or_else(|| Error::Contract(format!("no moment for {name}")))?;
            let v = self.v.get_mut(name).ok_or_else(|| Error::Contract(format!("no moment for {name}")))?;
            for (((p, m), v), g) in p.data_mut().iter_mut().zip(m.data_mut()).zip(v.data_mut()).zip(g) {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                let mh = *m / c1;
                let vh = *v / c2;
                *p -= lr * mh / (libm::sqrt(vh) + eps);
            }
        }
        Ok(())
    }
}

/// Epochs (0-based) from which the rate is halved: `floor(2E/3)` and
/// `floor(5E/6)`, dropping zero and duplicates.
pub fn milestones(epochs: usize) -> Vec<usize> {
    let mut m: Vec<usize> = [2 * epochs / 3, 5 * epochs / 6].into_iter().filter(|&e| e > 0).collect();
    m.dedup();
    m
}

/// Learning rate used during 0-based `epoch`.
pub fn lr_at(base: f64, epoch: usize, milestones: &[usize]) -> f64 {
    let halvings = milestones.iter().filter(|&&m| m <= epoch).count();
    base * libm::pow(0.5, halvings as f64)
}
