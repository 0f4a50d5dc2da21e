//! Pruning masks and the iterative pruning loop shared by FairPrune, OBD and
//! magnitude pruning.
//!
//! Each iteration scores the current (already masked) model, removes the
//! lowest-scoring active parameters and zeroes them. There is no retraining
//! between iterations. Iteration `t` of `T = ⌈target/p⌉` brings the cumulative
//! pruned count to `⌊min(t·p, target)·N⌋`; the last iteration lands exactly on
//! `⌊target·N⌋`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{GroupedDataset, PairSampler, PooledSampler};
use crate::error::{check_len, Error, Result};
use crate::metrics::FairnessReport;
use crate::nn::{Batch, DifferentiableModel};
use crate::rng::derive_seed;
use crate::saliency::{DiagonalMean, SaliencyAccumulator, SaliencyKind, SaliencyMap};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStep {
    pub iteration: usize,
    pub indices: Vec<usize>,
}

/// Keep/prune bit per parameter. Pruned bits never revert.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruningMask {
    bits: Vec<bool>,
    pruned_count: usize,
    history: Vec<PruneStep>,
}

impl PruningMask {
    pub fn new(n: usize) -> Self {
        Self {
            bits: vec![false; n],
            pruned_count: 0,
            history: Vec::new(),
        }
    }

    /// Rebuilds a mask from bits alone; history collapses to one step at iteration 0.
    pub fn from_bits(bits: Vec<bool>) -> Self {
        let indices: Vec<usize> = (0..bits.len()).filter(|&i| bits[i]).collect();
        let pruned_count = indices.len();
        let history = if indices.is_empty() {
            Vec::new()
        } else {
            vec![PruneStep { iteration: 0, indices }]
        };
        Self {
            bits,
            pruned_count,
            history,
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn is_pruned(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn pruned_count(&self) -> usize {
        self.pruned_count
    }

    pub fn active_count(&self) -> usize {
        self.bits.len() - self.pruned_count
    }

    pub fn pruned_fraction(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.pruned_count as f64 / self.bits.len() as f64
        }
    }

    pub fn history(&self) -> &[PruneStep] {
        &self.history
    }

    /// Marks `indices` as pruned. Every index must be in range and still active.
    pub fn prune(&mut self, iteration: usize, indices: &[usize]) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for &i in indices {
            if i >= self.bits.len() {
                return Err(Error::Invariant(format!("prune index {i} out of range")));
            }
            if self.bits[i] || !seen.insert(i) {
                return Err(Error::Invariant(format!("parameter {i} is already pruned")));
            }
        }
        for &i in indices {
            self.bits[i] = true;
        }
        self.pruned_count += indices.len();
        if !indices.is_empty() {
            self.history.push(PruneStep {
                iteration,
                indices: indices.to_vec(),
            });
        }
        Ok(())
    }

    /// Zeroes the pruned coordinates of `model` in place.
    pub fn apply<M: DifferentiableModel>(&self, model: &mut M) -> Result<()> {
        check_len("mask", model.num_params(), self.bits.len())?;
        for (p, &pruned) in model.params_mut().iter_mut().zip(&self.bits) {
            if pruned {
                *p = 0.0;
            }
        }
        Ok(())
    }
}

/// Copy of `model` with the masked coordinates set to exactly zero.
pub fn apply_mask<M: DifferentiableModel>(model: &M, mask: &PruningMask) -> Result<M> {
    let mut out = model.clone();
    mask.apply(&mut out)?;
    Ok(out)
}

/// The `k` active indices with the smallest scores, ties to the lower index.
/// Returned in ascending index order.
pub fn select_prune_set(map: &SaliencyMap, mask: &PruningMask, k: usize) -> Result<Vec<usize>> {
    check_len("saliency map", mask.len(), map.len())?;
    if k > mask.active_count() {
        return Err(Error::config(format!(
            "cannot prune {k} parameters, only {} active",
            mask.active_count()
        )));
    }
    if let Some(i) = map.values.iter().position(|v| v.is_nan()) {
        return Err(Error::Invariant(format!("saliency of parameter {i} is NaN")));
    }
    let mut active: Vec<usize> = (0..mask.len()).filter(|&i| !mask.is_pruned(i)).collect();
    if k < active.len() {
        active.select_nth_unstable_by(k, |&a, &b| {
            map.values[a].total_cmp(&map.values[b]).then(a.cmp(&b))
        });
    }
    active.truncate(k);
    active.sort_unstable();
    Ok(active)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PruneMethod {
    Fairprune,
    Obd,
    Magnitude,
}

impl std::fmt::Display for PruneMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PruneMethod::Fairprune => "fairprune",
            PruneMethod::Obd => "obd",
            PruneMethod::Magnitude => "magnitude",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PruneSchedule {
    pub method: PruneMethod,
    /// Fraction of the original parameter count removed per iteration.
    pub p_per_iteration: f64,
    /// Total fraction of parameters removed at the end.
    pub target_ratio: f64,
    pub beta: f64,
    pub batches_per_iteration: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub with_replacement: bool,
    /// Stop early once the monitored Eopp1 is at or below this value.
    pub stop_eopp1_below: Option<f64>,
    /// Log `|Σ g_i θ_i|` per group over each iteration's pruned set.
    pub report_first_order: bool,
}

impl Default for PruneSchedule {
    fn default() -> Self {
        Self::fitzpatrick_preset()
    }
}

impl PruneSchedule {
    /// 5% per iteration, saliency averaged over 500 pairs of size-2 batches, pr 35%, β 0.33.
    pub fn fitzpatrick_preset() -> Self {
        Self {
            method: PruneMethod::Fairprune,
            p_per_iteration: 0.05,
            target_ratio: 0.35,
            beta: 0.33,
            batches_per_iteration: 500,
            batch_size: 2,
            seed: 0,
            with_replacement: false,
            stop_eopp1_below: None,
            report_first_order: false,
        }
    }

    /// 10% per iteration, 200 pairs of size-64 batches, pr 50%, β 0.2.
    pub fn isic_preset() -> Self {
        Self {
            p_per_iteration: 0.10,
            target_ratio: 0.5,
            beta: 0.2,
            batches_per_iteration: 200,
            batch_size: 64,
            ..Self::fitzpatrick_preset()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.target_ratio) {
            return Err(Error::config("target_ratio must lie in [0, 1]"));
        }
        if !(self.p_per_iteration > 0.0 && self.p_per_iteration <= 1.0) {
            return Err(Error::config("p_per_iteration must lie in (0, 1]"));
        }
        if self.target_ratio > 0.0 && self.p_per_iteration > self.target_ratio + 1e-12 {
            return Err(Error::config("p_per_iteration must not exceed target_ratio"));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::config("beta must be finite and non-negative"));
        }
        if self.batches_per_iteration == 0 || self.batch_size == 0 {
            return Err(Error::config("batches_per_iteration and batch_size must be positive"));
        }
        Ok(())
    }

    pub fn num_iterations(&self) -> usize {
        if self.target_ratio <= 0.0 {
            0
        } else {
            (self.target_ratio / self.p_per_iteration - 1e-9).ceil() as usize
        }
    }

    /// Cumulative pruned counts after each iteration for `n` parameters.
    pub fn cumulative_targets(&self, n: usize) -> Result<Vec<usize>> {
        self.validate()?;
        let iterations = self.num_iterations();
        let count = |fraction: f64| ((fraction * n as f64) + 1e-9).floor() as usize;
        let final_count = count(self.target_ratio).min(n);
        if iterations > 0 && final_count == 0 {
            return Err(Error::config(format!(
                "target ratio {} prunes nothing out of {n} parameters",
                self.target_ratio
            )));
        }
        Ok((1..=iterations)
            .map(|t| {
                if t == iterations {
                    final_count
                } else {
                    count((t as f64 * self.p_per_iteration).min(self.target_ratio)).min(final_count)
                }
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub pruned_count: usize,
    pub pruned_fraction: f64,
    pub report: Option<FairnessReport>,
    /// `|Σ_{i pruned this iteration} g^c_i θ_i|` for c = 0, 1.
    pub first_order: Option<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub method: PruneMethod,
    pub beta: Option<f64>,
    /// Row 0 is the unpruned model.
    pub records: Vec<IterationRecord>,
    pub stopped_early: bool,
}

impl IterationLog {
    pub const CSV_HEADER: &'static str = "iteration,pruned_fraction,eopp0,eopp1,eodd,f1_g0,f1_g1,f1_avg,f1_diff";

    /// Pruning iterations performed (excluding the baseline row).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let metrics = match &r.report {
                Some(m) => format!(
                    "{},{},{},{},{},{},{}",
                    m.eopp0, m.eopp1, m.eodd, m.f1_g0, m.f1_g1, m.f1_avg, m.f1_diff
                ),
                None => ",,,,,,".to_string(),
            };
            out.push_str(&format!("{},{},{}\n", r.iteration, r.pruned_fraction, metrics));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PruneOutcome<M> {
    pub model: M,
    pub mask: PruningMask,
    pub log: IterationLog,
    /// Per-group saliency maps of the unpruned model (FairPrune only).
    pub initial_group_saliency: Option<[SaliencyMap; 2]>,
}

/// Evaluates a model state; used to log fairness per iteration.
pub type Monitor<'a, M> = &'a (dyn Fn(&M) -> Result<FairnessReport> + Sync);

/// Pairs processed per parallel chunk when estimating Hessian diagonals.
const CHUNK: usize = 64;

fn fairprune_scores<M: DifferentiableModel + Sync>(
    model: &M,
    data: &GroupedDataset,
    sampler: &mut PairSampler,
    schedule: &PruneSchedule,
    mask: &PruningMask,
) -> Result<(SaliencyMap, SaliencyAccumulator, Option<[Vec<f64>; 2]>)> {
    let n = model.num_params();
    let mut acc = SaliencyAccumulator::new(n);
    let mut grads = schedule.report_first_order.then(|| [DiagonalMean::new(n), DiagonalMean::new(n)]);
    let mut remaining = schedule.batches_per_iteration;
    while remaining > 0 {
        let take = remaining.min(CHUNK);
        remaining -= take;
        let pairs: Vec<(Batch, Batch)> = (0..take)
            .map(|_| {
                let (b0, b1) = sampler.next_pair();
                (data.batch(&b0), data.batch(&b1))
            })
            .collect();
        let diagonals: Vec<Result<_>> = pairs
            .par_iter()
            .map(|(b0, b1)| {
                let h = (model.hessian_diag(b0)?, model.hessian_diag(b1)?);
                let g = if schedule.report_first_order {
                    Some((model.gradient(b0)?, model.gradient(b1)?))
                } else {
                    None
                };
                Ok((h, g))
            })
            .collect();
        for d in diagonals {
            let ((h0, h1), g) = d?;
            acc.accumulate(&h0, &h1)?;
            if let (Some(sums), Some((g0, g1))) = (grads.as_mut(), g) {
                sums[0].add(&g0)?;
                sums[1].add(&g1)?;
            }
        }
    }
    let map = acc.finalize(model.params(), schedule.beta, Some(mask))?;
    let grads = match grads {
        Some([a, b]) => Some([a.mean()?, b.mean()?]),
        None => None,
    };
    Ok((map, acc, grads))
}

fn obd_scores<M: DifferentiableModel + Sync>(
    model: &M,
    data: &GroupedDataset,
    sampler: &mut PooledSampler,
    schedule: &PruneSchedule,
    mask: &PruningMask,
) -> Result<SaliencyMap> {
    let mut mean = DiagonalMean::new(model.num_params());
    let mut remaining = schedule.batches_per_iteration;
    while remaining > 0 {
        let take = remaining.min(CHUNK);
        remaining -= take;
        let batches: Vec<Batch> = (0..take).map(|_| data.batch(&sampler.next_batch())).collect();
        let diagonals: Vec<Result<Vec<f64>>> = batches.par_iter().map(|b| model.hessian_diag(b)).collect();
        for h in diagonals {
            mean.add(&h?)?;
        }
    }
    mean.finalize(model.params(), Some(mask))
}

fn magnitude_scores<M: DifferentiableModel>(model: &M, mask: &PruningMask) -> Result<SaliencyMap> {
    let mut map = SaliencyMap {
        values: model.params().iter().map(|t| t.abs()).collect(),
        kind: SaliencyKind::GroupSaliency,
        beta: None,
        batches_accumulated: 0,
    };
    map.exclude_pruned(mask)?;
    Ok(map)
}

enum Sampler {
    Pair(PairSampler),
    Pooled(PooledSampler),
    None,
}

/// Runs `schedule` on a copy of `model`. `data` is the training split used
/// to estimate saliency; `monitor`, when given, is evaluated before pruning
/// and after every iteration.
pub fn prune<M: DifferentiableModel + Sync>(
    model: &M,
    data: &GroupedDataset,
    schedule: &PruneSchedule,
    monitor: Option<Monitor<'_, M>>,
) -> Result<PruneOutcome<M>> {
    if schedule.stop_eopp1_below.is_some() && monitor.is_none() {
        return Err(Error::config("stop_eopp1_below needs a monitoring split"));
    }
    prune_observed(model, data, schedule, &mut |m: &M, _: &PruningMask| {
        monitor.map(|f| f(m)).transpose()
    })
}

/// Like [`prune`], but calls `observe` on the baseline and after every
/// iteration with the current model and mask. The returned report, if any,
/// is logged and drives the early-stop threshold.
pub fn prune_observed<M: DifferentiableModel + Sync>(
    model: &M,
    data: &GroupedDataset,
    schedule: &PruneSchedule,
    observe: &mut dyn FnMut(&M, &PruningMask) -> Result<Option<FairnessReport>>,
) -> Result<PruneOutcome<M>> {
    schedule.validate()?;
    let n = model.num_params();
    let targets = schedule.cumulative_targets(n)?;
    let sampler_seed = derive_seed(schedule.seed, crate::rng::stream::PRUNE);
    let mut sampler = match (schedule.method, targets.is_empty()) {
        (_, true) | (PruneMethod::Magnitude, _) => Sampler::None,
        (PruneMethod::Fairprune, false) => {
            data.require_both_groups()?;
            Sampler::Pair(PairSampler::new(data, schedule.batch_size, sampler_seed, schedule.with_replacement)?)
        }
        (PruneMethod::Obd, false) => Sampler::Pooled(PooledSampler::new(
            data,
            schedule.batch_size,
            sampler_seed,
            schedule.with_replacement,
        )?),
    };

    let mut current = model.clone();
    let mut mask = PruningMask::new(n);
    let mut records = vec![IterationRecord {
        iteration: 0,
        pruned_count: 0,
        pruned_fraction: 0.0,
        report: observe(&current, &mask)?,
        first_order: None,
    }];
    let mut initial_group_saliency = None;
    let mut stopped_early = false;

    for (t, &target) in targets.iter().enumerate() {
        let iteration = t + 1;
        let k = target - mask.pruned_count();
        let (map, grads) = match &mut sampler {
            Sampler::Pair(s) => {
                let (map, acc, grads) = fairprune_scores(&current, data, s, schedule, &mask)?;
                if initial_group_saliency.is_none() {
                    initial_group_saliency = Some(acc.group_maps(current.params())?);
                }
                (map, grads)
            }
            Sampler::Pooled(s) => (obd_scores(&current, data, s, schedule, &mask)?, None),
            Sampler::None => (magnitude_scores(&current, &mask)?, None),
        };
        let chosen = select_prune_set(&map, &mask, k)?;
        let first_order = grads.map(|g| {
            [0, 1].map(|c| {
                chosen
                    .iter()
                    .map(|&i| g[c][i] * current.params()[i])
                    .sum::<f64>()
                    .abs()
            })
        });
        mask.prune(iteration, &chosen)?;
        mask.apply(&mut current)?;
        let report = observe(&current, &mask)?;
        let reached = matches!(
            (&report, schedule.stop_eopp1_below),
            (Some(r), Some(threshold)) if r.eopp1 <= threshold
        );
        records.push(IterationRecord {
            iteration,
            pruned_count: mask.pruned_count(),
            pruned_fraction: mask.pruned_fraction(),
            report,
            first_order,
        });
        if reached && iteration < targets.len() {
            stopped_early = true;
            break;
        }
    }

    Ok(PruneOutcome {
        model: current,
        mask,
        log: IterationLog {
            method: schedule.method,
            beta: (schedule.method == PruneMethod::Fairprune).then_some(schedule.beta),
            records,
            stopped_early,
        },
        initial_group_saliency,
    })
}

fn with_method(schedule: &PruneSchedule, method: PruneMethod) -> PruneSchedule {
    PruneSchedule {
        method,
        ..schedule.clone()
    }
}

/// FairPrune: combined two-group score from paired group batches.
pub fn fairprune<M: DifferentiableModel + Sync>(
    model: &M,
    data: &GroupedDataset,
    schedule: &PruneSchedule,
    monitor: Option<Monitor<'_, M>>,
) -> Result<PruneOutcome<M>> {
    prune(model, data, &with_method(schedule, PruneMethod::Fairprune), monitor)
}

/// Optimal Brain Damage: saliency from pooled batches, groups ignored.
pub fn obd_prune<M: DifferentiableModel + Sync>(
    model: &M,
    data: &GroupedDataset,
    schedule: &PruneSchedule,
    monitor: Option<Monitor<'_, M>>,
) -> Result<PruneOutcome<M>> {
    prune(model, data, &with_method(schedule, PruneMethod::Obd), monitor)
}

/// Smallest `|θ_i|` first. Needs no data.
pub fn magnitude_prune<M: DifferentiableModel + Sync>(
    model: &M,
    schedule: &PruneSchedule,
    monitor: Option<Monitor<'_, M>>,
) -> Result<PruneOutcome<M>> {
    // The data argument is never read for magnitude scores.
    let placeholder = GroupedDataset::new(1, 1, vec![], vec![], vec![], crate::data::Provenance::Synthetic, None)?;
    prune(model, &placeholder, &with_method(schedule, PruneMethod::Magnitude), monitor)
}
