//! Mini-batch Adam with a single step decay of the learning rate.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DifferentiableModel, Mlp};
use crate::data::GroupedDataset;
use crate::error::{check_len, Error, Result};
use crate::pruner::PruningMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Fraction of `epochs` after which the learning rate is multiplied by `decay_factor`.
    pub decay_at_fraction: f64,
    pub decay_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 256,
            learning_rate: 1e-4,
            decay_at_fraction: 0.8,
            decay_factor: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::config("learning_rate must be positive"));
        }
        if !(0.0..=1.0).contains(&self.decay_at_fraction) {
            return Err(Error::config("decay_at_fraction must lie in [0, 1]"));
        }
        if !(self.decay_factor > 0.0) {
            return Err(Error::config("decay_factor must be positive"));
        }
        Ok(())
    }

    /// First epoch (0-based) that runs at the decayed rate.
    pub fn decay_epoch(&self) -> usize {
        (self.decay_at_fraction * self.epochs as f64).round() as usize
    }
}

/// Full-dataset mean loss before training (`losses[0]`) and after each epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub losses: Vec<f64>,
}

impl TrainHistory {
    pub fn initial(&self) -> f64 {
        self.losses[0]
    }

    pub fn last(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Trains `model` in place on `dataset`.
///
/// When `mask` is given, masked coordinates are zeroed before the first step
/// and their gradients are discarded, so they stay exactly zero.
pub fn train(
    model: &mut Mlp,
    dataset: &GroupedDataset,
    config: &TrainConfig,
    mask: Option<&PruningMask>,
) -> Result<TrainHistory> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::data("cannot train on an empty dataset"));
    }
    if let Some(mask) = mask {
        check_len("training mask", model.num_params(), mask.len())?;
        mask.apply(model)?;
    }
    let full = dataset.as_batch();
    let mut losses = vec![model.loss(&full)?];
    let mut rng = crate::rng::rng_from(config.seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut adam = Adam::new(model.num_params());
    let decay_epoch = config.decay_epoch();
    for epoch in 0..config.epochs {
        let lr = if epoch >= decay_epoch {
            config.learning_rate * config.decay_factor
        } else {
            config.learning_rate
        };
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch = dataset.batch(chunk);
            let mut grad = model.gradient(&batch)?;
            if let Some(mask) = mask {
                for (g, pruned) in grad.iter_mut().zip(mask.bits()) {
                    if *pruned {
                        *g = 0.0;
                    }
                }
            }
            adam.update(model.params_mut(), &grad, lr);
            if let Some(mask) = mask {
                mask.apply(model)?;
            }
        }
        losses.push(model.loss(&full)?);
    }
    Ok(TrainHistory { losses })
}
