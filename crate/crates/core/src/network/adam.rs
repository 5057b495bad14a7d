use serde::{Deserialize, Serialize};

use super::model::{Grads, Network};
use super::tensor::Real;
use crate::error::{Error, Result};

/// Optimizer and schedule settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Loss-curve sampling interval.
    pub log_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate: 2e-4,
            batch_size: 8,
            iterations: 1_000_000,
            seed: 0,
            log_every: 50,
        }
    }
}

impl TrainingConfig {
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0
            && self.learning_rate > 0.0
            && self.batch_size > 0
            && self.log_every > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("training config {self:?}")))
        }
    }
}

/// One Adam update of `w` with bias correction at step `t >= 1`.
pub fn adam_update<T: Real>(w: &mut [T], g: &[T], m: &mut [T], v: &mut [T], t: u64, cfg: &TrainingConfig) {
    let (b1, b2) = (T::lit(cfg.beta1), T::lit(cfg.beta2));
    let c1 = T::lit(1.0 - cfg.beta1.powi(t as i32));
    let c2 = T::lit(1.0 - cfg.beta2.powi(t as i32));
    let lr = T::lit(cfg.learning_rate);
    let eps = T::lit(cfg.epsilon);
    let one = T::one();
    for i in 0..w.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        w[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Adam state for every parameter of a network.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: TrainingConfig,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Adam<T> {
    pub fn new(net: &Network<T>, config: TrainingConfig) -> Self {
        let zeros = || net.params().iter().map(|p| vec![T::zero(); p.value.len()]).collect();
        Adam { config, step: 0, m: zeros(), v: zeros() }
    }

    pub fn apply(&mut self, net: &mut Network<T>, grads: &Grads<T>) {
        self.step += 1;
        for (((p, g), m), v) in net.params_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            adam_update(&mut p.value, g, m, v, self.step, &self.config);
        }
    }
}
