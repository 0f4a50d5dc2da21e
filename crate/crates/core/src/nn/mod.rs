//! Dense classifier engine: forward pass, softmax cross-entropy, exact
//! gradients and a Gauss–Newton estimate of the Hessian diagonal.

pub mod checkpoint;
pub mod fd;
mod mlp;
pub mod quadratic;
pub mod train;

pub use mlp::{Activation, LayerPart, Mlp};
pub use train::{train, TrainConfig, TrainHistory};

use crate::error::{check_len, Error, Result};

/// A mini-batch of feature rows with class labels and group tags.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    dim: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    groups: Vec<u8>,
}

impl Batch {
    /// `features` is row-major `labels.len() x dim`.
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<usize>, groups: Vec<u8>) -> Result<Self> {
        check_len("batch features", labels.len() * dim, features.len())?;
        check_len("batch groups", labels.len(), groups.len())?;
        if let Some(g) = groups.iter().find(|&&g| g > 1) {
            return Err(Error::data(format!("group tag {g} outside {{0,1}}")));
        }
        Ok(Self {
            dim,
            features,
            labels,
            groups,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> &[u8] {
        &self.groups
    }

    /// Concatenates `times` copies of this batch.
    pub fn repeated(&self, times: usize) -> Batch {
        Batch {
            dim: self.dim,
            features: self.features.repeat(times),
            labels: self.labels.repeat(times),
            groups: self.groups.repeat(times),
        }
    }
}

/// Row-major `rows x classes` matrix of network outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Logits {
    pub rows: usize,
    pub classes: usize,
    pub data: Vec<f64>,
}

impl Logits {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.classes..(i + 1) * self.classes]
    }

    pub fn predictions(&self) -> Vec<usize> {
        (0..self.rows).map(|i| argmax(self.row(i))).collect()
    }
}

/// Index of the largest entry; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Numerically stable `ln Σ exp(z)`.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    max + z.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `log Σ exp(z_j) - z_y`, with `ln_1p` so tiny losses do not round to zero.
fn row_ce(z: &[f64], y: usize) -> f64 {
    let top = argmax(z);
    let max = z[top];
    let rest: f64 = z
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != top)
        .map(|(_, &v)| (v - max).exp())
        .sum();
    (max - z[y]) + rest.ln_1p()
}

/// Mean softmax cross-entropy of `logits` against `labels`.
pub fn loss_ce(logits: &Logits, labels: &[usize]) -> Result<f64> {
    check_len("loss labels", logits.rows, labels.len())?;
    if logits.rows == 0 {
        return Err(Error::data("cross-entropy of an empty batch"));
    }
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        if y >= logits.classes {
            return Err(Error::data(format!(
                "label {y} out of range for {} classes",
                logits.classes
            )));
        }
        total += row_ce(logits.row(i), y);
    }
    Ok(total / logits.rows as f64)
}

/// A loss surface over a flat parameter vector, with first and diagonal
/// second derivatives. Implemented by [`Mlp`] and by the quadratic
/// verification surrogate.
pub trait DifferentiableModel: Clone {
    fn num_params(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn loss(&self, batch: &Batch) -> Result<f64>;
    fn gradient(&self, batch: &Batch) -> Result<Vec<f64>>;
    /// Non-negative estimate of `∂²E/∂θ_i²` for every parameter.
    fn hessian_diag(&self, batch: &Batch) -> Result<Vec<f64>>;
}

pub fn backward<M: DifferentiableModel>(model: &M, batch: &Batch) -> Result<Vec<f64>> {
    model.gradient(batch)
}

pub fn hessian_diag<M: DifferentiableModel>(model: &M, batch: &Batch) -> Result<Vec<f64>> {
    model.hessian_diag(batch)
}

pub use fd::hessian_diag_fd;
