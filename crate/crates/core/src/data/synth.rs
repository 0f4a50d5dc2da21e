use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{GroupedDataset, Provenance};
use crate::error::{Error, Result};

/// Gaussian class blobs with a group-dependent shortcut.
///
/// The first `dim - num_classes` coordinates ("core") are `μ_y + N(0, I)`
/// with `‖μ_k‖ = class_signal`, identical for both groups. The last
/// `num_classes` coordinates ("spurious") are `s_c · onehot(y) + σ_c · N(0, I)`,
/// where `s_c = spurious_strength[c]` and `σ_c = spurious_noise[c]`. With the default strengths the
/// shortcut is only informative for group 1, so a model trained on the
/// pooled data is more accurate on group 1. Observed labels are flipped to
/// a uniformly chosen other class with probability `label_noise[c]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_per_group: [usize; 2],
    pub dim: usize,
    pub num_classes: usize,
    pub class_signal: f64,
    pub spurious_strength: [f64; 2],
    /// Standard deviation of the noise in the spurious block, per group.
    pub spurious_noise: [f64; 2],
    pub label_noise: [f64; 2],
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_per_group: [3000, 3000],
            dim: 10,
            num_classes: 3,
            class_signal: 2.5,
            spurious_strength: [0.0, 3.0],
            spurious_noise: [0.3, 1.0],
            label_noise: [0.0, 0.0],
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config("synthetic data needs at least two classes"));
        }
        if self.dim < 2 * self.num_classes {
            return Err(Error::config(
                "synthetic dim must be at least 2 * num_classes (a core block and a shortcut block of num_classes each)",
            ));
        }
        if !(self.class_signal >= 0.0) || self.spurious_strength.iter().any(|s| !(*s >= 0.0)) {
            return Err(Error::config("signal strengths must be non-negative"));
        }
        if self.spurious_noise.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::config("spurious noise scales must be finite and non-negative"));
        }
        if self.label_noise.iter().any(|r| !(0.0..0.5).contains(r)) {
            return Err(Error::config("label noise rates must lie in [0, 0.5)"));
        }
        Ok(())
    }

    pub fn core_dim(&self) -> usize {
        self.dim - self.num_classes
    }
}

/// `num_classes` random orthonormal directions scaled to `class_signal`, so
/// every pair of class means is `class_signal·√2` apart.
fn class_means(cfg: &SynthConfig, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_classes);
    while basis.len() < cfg.num_classes {
        let mut v: Vec<f64> = (0..cfg.core_dim()).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    basis
        .into_iter()
        .map(|b| b.into_iter().map(|x| cfg.class_signal * x).collect())
        .collect()
}

pub fn gen_synthetic_biased(cfg: &SynthConfig) -> Result<GroupedDataset> {
    cfg.validate()?;
    let mut rng = crate::rng::rng_from(cfg.seed);
    let means = class_means(cfg, &mut rng);
    let k = cfg.num_classes;
    let total = cfg.n_per_group[0] + cfg.n_per_group[1];
    let mut features = Vec::with_capacity(total * cfg.dim);
    let mut labels = Vec::with_capacity(total);
    let mut groups = Vec::with_capacity(total);
    for group in 0..2u8 {
        let strength = cfg.spurious_strength[group as usize];
        let noise = cfg.label_noise[group as usize];
        let scale = cfg.spurious_noise[group as usize];
        for _ in 0..cfg.n_per_group[group as usize] {
            let y = rng.gen_range(0..k);
            for m in &means[y] {
                let e: f64 = rng.sample(StandardNormal);
                features.push(m + e);
            }
            for j in 0..k {
                let e: f64 = rng.sample(StandardNormal);
                features.push(if j == y { strength } else { 0.0 } + scale * e);
            }
            let flip = rng.gen::<f64>() < noise;
            let observed = if flip {
                let other = rng.gen_range(0..k - 1);
                if other >= y {
                    other + 1
                } else {
                    other
                }
            } else {
                y
            };
            labels.push(observed);
            groups.push(group);
        }
    }
    GroupedDataset::new(cfg.dim, k, features, labels, groups, Provenance::Synthetic, Some(cfg.seed))
}
