//! Second-order parameter saliency and the two-group pruning score.
//!
//! For one group, zeroing parameter `i` of a converged model raises the
//! loss by approximately `½ h_ii θ_i²`. The combined score
//! `s_i = ½ h⁰_ii θ_i² - β · ½ h¹_ii θ_i²` is small for parameters that
//! matter little to group 0 but a lot to group 1; pruning the smallest
//! scores narrows the gap between the two groups.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::pruner::PruningMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaliencyKind {
    GroupSaliency,
    CombinedScore,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyMap {
    pub values: Vec<f64>,
    pub kind: SaliencyKind,
    pub beta: Option<f64>,
    pub batches_accumulated: usize,
}

impl SaliencyMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Sets the score of every pruned parameter to `+∞`.
    pub fn exclude_pruned(&mut self, mask: &PruningMask) -> Result<()> {
        check_len("saliency mask", self.values.len(), mask.len())?;
        for (v, &pruned) in self.values.iter_mut().zip(mask.bits()) {
            if pruned {
                *v = f64::INFINITY;
            }
        }
        Ok(())
    }
}

/// `½ h_ii θ_i²` per parameter.
pub fn group_saliency(theta: &[f64], h_diag: &[f64]) -> Result<SaliencyMap> {
    check_len("group saliency", theta.len(), h_diag.len())?;
    Ok(SaliencyMap {
        values: theta.iter().zip(h_diag).map(|(t, h)| 0.5 * h * t * t).collect(),
        kind: SaliencyKind::GroupSaliency,
        beta: None,
        batches_accumulated: 1,
    })
}

/// `½ h⁰_ii θ_i² - β · ½ h¹_ii θ_i²`, evaluated in exactly that form so that
/// the result equals `group_saliency(θ, h0) - β · group_saliency(θ, h1)`.
pub fn fairprune_score(theta: &[f64], h0: &[f64], h1: &[f64], beta: f64) -> Result<SaliencyMap> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::config(format!("beta must be finite and non-negative, got {beta}")));
    }
    check_len("fairprune score (group 1)", h0.len(), h1.len())?;
    let s0 = group_saliency(theta, h0)?;
    let s1 = group_saliency(theta, h1)?;
    Ok(SaliencyMap {
        values: s0.values.iter().zip(&s1.values).map(|(a, b)| a - beta * b).collect(),
        kind: SaliencyKind::CombinedScore,
        beta: Some(beta),
        batches_accumulated: 1,
    })
}

/// Running mean of Hessian diagonals, summed in submission order.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalMean {
    sum: Vec<f64>,
    count: usize,
}

impl DiagonalMean {
    pub fn new(n: usize) -> Self {
        Self {
            sum: vec![0.0; n],
            count: 0,
        }
    }

    pub fn add(&mut self, h: &[f64]) -> Result<()> {
        check_len("hessian diagonal", self.sum.len(), h.len())?;
        if let Some(v) = h.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invariant(format!("non-finite hessian entry {v}")));
        }
        for (s, v) in self.sum.iter_mut().zip(h) {
            *s += v;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::Invariant("no batches accumulated".into()));
        }
        let n = self.count as f64;
        Ok(self.sum.iter().map(|s| s / n).collect())
    }

    /// `½ h̄_ii θ_i²` from the averaged diagonal.
    pub fn finalize(&self, theta: &[f64], mask: Option<&PruningMask>) -> Result<SaliencyMap> {
        let mut map = group_saliency(theta, &self.mean()?)?;
        map.batches_accumulated = self.count;
        if let Some(mask) = mask {
            map.exclude_pruned(mask)?;
        }
        Ok(map)
    }
}

/// Per-group running Hessian diagonals over `(B0, B1)` batch pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct SaliencyAccumulator {
    groups: [DiagonalMean; 2],
}

impl SaliencyAccumulator {
    pub fn new(n: usize) -> Self {
        Self {
            groups: [DiagonalMean::new(n), DiagonalMean::new(n)],
        }
    }

    pub fn accumulate(&mut self, h0: &[f64], h1: &[f64]) -> Result<()> {
        check_len("group 1 hessian diagonal", h0.len(), h1.len())?;
        self.groups[0].add(h0)?;
        self.groups[1].add(h1)
    }

    pub fn pair_count(&self) -> usize {
        self.groups[0].count()
    }

    pub fn averages(&self) -> Result<[Vec<f64>; 2]> {
        Ok([self.groups[0].mean()?, self.groups[1].mean()?])
    }

    /// Combined score from the averaged diagonals; pruned parameters get `+∞`.
    pub fn finalize(&self, theta: &[f64], beta: f64, mask: Option<&PruningMask>) -> Result<SaliencyMap> {
        if self.pair_count() == 0 {
            return Err(Error::Invariant("saliency accumulator is empty".into()));
        }
        let [h0, h1] = self.averages()?;
        let mut map = fairprune_score(theta, &h0, &h1, beta)?;
        map.batches_accumulated = self.pair_count();
        if let Some(mask) = mask {
            map.exclude_pruned(mask)?;
        }
        Ok(map)
    }

    /// Per-group saliency maps `½ h̄ᶜ_ii θ_i²`.
    pub fn group_maps(&self, theta: &[f64]) -> Result<[SaliencyMap; 2]> {
        Ok([self.groups[0].finalize(theta, None)?, self.groups[1].finalize(theta, None)?])
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `(v - min) / (max - min)` within the selection; a constant selection maps to 0.
    #[default]
    MinMax,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyRow {
    pub param_index: usize,
    pub group: u8,
    pub normalized_saliency: f64,
}

fn normalize(values: &[f64], normalization: Normalization) -> Vec<f64> {
    match normalization {
        Normalization::MinMax => {
            let min = values.iter().copied().fold(f64::INFINITY, f64::min);
            let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let range = max - min;
            values
                .iter()
                .map(|v| if range > 0.0 { (v - min) / range } else { 0.0 })
                .collect()
        }
    }
}

/// Normalised per-group saliencies of the parameters in `selection`, one
/// row per (parameter, group), parameter-major.
pub fn export_saliency_distribution(
    group0: &SaliencyMap,
    group1: &SaliencyMap,
    selection: Range<usize>,
    normalization: Normalization,
) -> Result<Vec<SaliencyRow>> {
    check_len("saliency distribution", group0.len(), group1.len())?;
    if selection.is_empty() || selection.end > group0.len() {
        return Err(Error::config(format!(
            "invalid parameter selection {selection:?} for {} parameters",
            group0.len()
        )));
    }
    let n0 = normalize(&group0.values[selection.clone()], normalization);
    let n1 = normalize(&group1.values[selection.clone()], normalization);
    Ok(selection
        .enumerate()
        .flat_map(|(j, param_index)| {
            [
                SaliencyRow {
                    param_index,
                    group: 0,
                    normalized_saliency: n0[j],
                },
                SaliencyRow {
                    param_index,
                    group: 1,
                    normalized_saliency: n1[j],
                },
            ]
        })
        .collect())
}

/// CSV with header `param_index,group,normalized_saliency`.
pub fn write_distribution_csv(rows: &[SaliencyRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::data(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::data(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
