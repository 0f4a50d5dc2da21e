use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{softmax, Batch, DifferentiableModel, Logits};
use crate::error::{check_len, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => f.write_str("tanh"),
            Activation::Relu => f.write_str("relu"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Which block of a layer's parameters to address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerPart {
    Weights,
    Biases,
    All,
}

/// Fully connected classifier. Hidden layers use `activation`; the last
/// layer emits raw logits.
///
/// Parameters live in one flat vector. For each layer `l` in order: the
/// weight matrix (`fan_out x fan_in`, row-major), then the `fan_out` biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layer_sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
    offsets: Vec<usize>,
    seed: u64,
}

/// Per-sample activations, reused across samples.
struct Scratch {
    /// `acts[0]` is the input; `acts[l + 1]` is the output of layer `l`.
    acts: Vec<Vec<f64>>,
    /// `deltas[l]` is `∂(.)/∂(pre-activation of layer l)`.
    deltas: Vec<Vec<f64>>,
}

impl Mlp {
    /// All-zero network.
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::config("an MLP needs at least an input and an output layer"));
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(Error::config("layer sizes must be positive"));
        }
        let mut offsets = Vec::with_capacity(layer_sizes.len());
        let mut total = 0;
        for w in layer_sizes.windows(2) {
            offsets.push(total);
            total += (w[0] + 1) * w[1];
        }
        offsets.push(total);
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: vec![0.0; total],
            offsets,
            seed: 0,
        })
    }

    /// Glorot-uniform weights (He-uniform for ReLU), zero biases.
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut mlp = Self::zeros(layer_sizes, activation)?;
        mlp.seed = seed;
        let mut rng = crate::rng::rng_from(seed);
        for l in 0..mlp.num_layers() {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = match activation {
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
            };
            let range = mlp.layer_range(l, LayerPart::Weights);
            for w in &mut mlp.params[range] {
                *w = rng.gen_range(-limit..limit);
            }
        }
        Ok(mlp)
    }

    pub fn from_flat(
        layer_sizes: &[usize],
        activation: Activation,
        params: Vec<f64>,
        seed: u64,
    ) -> Result<Self> {
        let mut mlp = Self::zeros(layer_sizes, activation)?;
        mlp.unflatten(&params)?;
        mlp.seed = seed;
        Ok(mlp)
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Seed used for initialisation (0 for hand-built networks).
    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn num_layers(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.clone()
    }

    pub fn unflatten(&mut self, values: &[f64]) -> Result<()> {
        check_len("parameter vector", self.params.len(), values.len())?;
        self.params.copy_from_slice(values);
        Ok(())
    }

    /// Index range of one layer's weights, biases, or both.
    pub fn layer_range(&self, layer: usize, part: LayerPart) -> Range<usize> {
        let start = self.offsets[layer];
        let weights_end = start + self.layer_sizes[layer] * self.layer_sizes[layer + 1];
        let end = self.offsets[layer + 1];
        match part {
            LayerPart::Weights => start..weights_end,
            LayerPart::Biases => weights_end..end,
            LayerPart::All => start..end,
        }
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.dim() != self.input_dim() {
            return Err(Error::config(format!(
                "feature dimension {} does not match model input {}",
                batch.dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_labels(&self, batch: &Batch) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::data("empty batch"));
        }
        let k = self.num_classes();
        if let Some(&y) = batch.labels().iter().find(|&&y| y >= k) {
            return Err(Error::data(format!("label {y} out of range for {k} classes")));
        }
        Ok(())
    }

    fn scratch(&self) -> Scratch {
        Scratch {
            acts: self.layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            deltas: self.layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    fn forward_sample(&self, x: &[f64], s: &mut Scratch) {
        s.acts[0].copy_from_slice(x);
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.params[self.layer_range(l, LayerPart::Weights)];
            let b = &self.params[self.layer_range(l, LayerPart::Biases)];
            let (head, tail) = s.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut z = b[o];
                for (wi, xi) in row.iter().zip(input) {
                    z += wi * xi;
                }
                out[o] = if l == last { z } else { self.activation.apply(z) };
            }
        }
    }

    /// Propagates `s.deltas[last]` down to `s.deltas[0]`.
    fn backprop_deltas(&self, s: &mut Scratch) {
        for l in (1..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let w = &self.params[self.layer_range(l, LayerPart::Weights)];
            let (lower, upper) = s.deltas.split_at_mut(l);
            let upstream = &upper[0];
            let down = &mut lower[l - 1];
            down.iter_mut().for_each(|d| *d = 0.0);
            for o in 0..fan_out {
                let d = upstream[o];
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (acc, wi) in down.iter_mut().zip(row) {
                    *acc += wi * d;
                }
            }
            for (acc, &a) in down.iter_mut().zip(&s.acts[l]) {
                *acc *= self.activation.derivative_from_output(a);
            }
        }
    }

    pub fn forward(&self, batch: &Batch) -> Result<Logits> {
        self.check_batch(batch)?;
        let k = self.num_classes();
        let mut s = self.scratch();
        let mut data = Vec::with_capacity(batch.len() * k);
        for i in 0..batch.len() {
            self.forward_sample(batch.row(i), &mut s);
            data.extend_from_slice(&s.acts[self.num_layers()]);
        }
        Ok(Logits {
            rows: batch.len(),
            classes: k,
            data,
        })
    }

    pub fn predict(&self, batch: &Batch) -> Result<Vec<usize>> {
        Ok(self.forward(batch)?.predictions())
    }

    /// Gauss–Newton diagonal of the mean cross-entropy.
    ///
    /// Uses the factorisation `diag(p) - p pᵀ = Σ_k p_k (e_k - p)(e_k - p)ᵀ`:
    /// for every class `k` the vector `√p_k (e_k - p)` is backpropagated and
    /// the squared parameter derivatives are summed, so every entry is a sum
    /// of squares.
    fn gauss_newton_diag(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        self.check_labels(batch)?;
        let top = self.num_layers() - 1;
        let mut s = self.scratch();
        let mut h = vec![0.0; self.params.len()];
        let mut delta_sq: Vec<Vec<f64>> = self.layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        for i in 0..batch.len() {
            self.forward_sample(batch.row(i), &mut s);
            let p = softmax(&s.acts[top + 1]);
            delta_sq.iter_mut().for_each(|d| d.iter_mut().for_each(|v| *v = 0.0));
            for (c, &pc) in p.iter().enumerate() {
                if pc == 0.0 {
                    continue;
                }
                let scale = pc.sqrt();
                for (j, d) in s.deltas[top].iter_mut().enumerate() {
                    let indicator = if j == c { 1.0 } else { 0.0 };
                    *d = scale * (indicator - p[j]);
                }
                self.backprop_deltas(&mut s);
                for (acc, d) in delta_sq.iter_mut().zip(&s.deltas) {
                    for (a, v) in acc.iter_mut().zip(d) {
                        *a += v * v;
                    }
                }
            }
            for l in 0..self.num_layers() {
                let fan_in = self.layer_sizes[l];
                let w_range = self.layer_range(l, LayerPart::Weights);
                let b_range = self.layer_range(l, LayerPart::Biases);
                let input = &s.acts[l];
                for (o, &dsq) in delta_sq[l].iter().enumerate() {
                    let row = &mut h[w_range.start + o * fan_in..w_range.start + (o + 1) * fan_in];
                    for (hi, xi) in row.iter_mut().zip(input) {
                        *hi += dsq * xi * xi;
                    }
                    h[b_range.start + o] += dsq;
                }
            }
        }
        let n = batch.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        Ok(h)
    }
}

impl DifferentiableModel for Mlp {
    fn num_params(&self) -> usize {
        self.params.len()
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn loss(&self, batch: &Batch) -> Result<f64> {
        self.check_labels(batch)?;
        super::loss_ce(&self.forward(batch)?, batch.labels())
    }

    fn gradient(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.check_batch(batch)?;
        self.check_labels(batch)?;
        let top = self.num_layers() - 1;
        let mut s = self.scratch();
        let mut g = vec![0.0; self.params.len()];
        for i in 0..batch.len() {
            self.forward_sample(batch.row(i), &mut s);
            let p = softmax(&s.acts[top + 1]);
            let y = batch.labels()[i];
            for (j, d) in s.deltas[top].iter_mut().enumerate() {
                *d = p[j] - if j == y { 1.0 } else { 0.0 };
            }
            self.backprop_deltas(&mut s);
            for l in 0..self.num_layers() {
                let fan_in = self.layer_sizes[l];
                let w_start = self.layer_range(l, LayerPart::Weights).start;
                let b_start = self.layer_range(l, LayerPart::Biases).start;
                for (o, &d) in s.deltas[l].iter().enumerate() {
                    let row = &mut g[w_start + o * fan_in..w_start + (o + 1) * fan_in];
                    for (gi, xi) in row.iter_mut().zip(&s.acts[l]) {
                        *gi += d * xi;
                    }
                    g[b_start + o] += d;
                }
            }
        }
        let n = batch.len() as f64;
        g.iter_mut().for_each(|v| *v /= n);
        Ok(g)
    }

    fn hessian_diag(&self, batch: &Batch) -> Result<Vec<f64>> {
        self.gauss_newton_diag(batch)
    }
}
