//! β × pruning-ratio grid search with per-seed vanilla models.
//!
//! Runs that share a schedule prefix are not repeated: one pruning run per
//! (method, β, seed) goes to the largest ratio and intermediate ratios are
//! read off the iteration at which their cumulative target is reached. This
//! yields exactly the masks separate runs would produce, because the score
//! stream and targets of the shorter schedule are a prefix of the longer one.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::data::{split, GroupedDataset};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, FairnessReport};
use crate::nn::{train, DifferentiableModel, Mlp, TrainHistory};
use crate::pruner::{prune_observed, PruneMethod, PruneSchedule, PruningMask};

/// Data splits and trained vanilla model for one seed.
#[derive(Clone, Debug)]
pub struct SeedContext {
    pub seed: u64,
    pub train: GroupedDataset,
    pub val: GroupedDataset,
    pub test: GroupedDataset,
    pub model: Mlp,
    pub history: Option<TrainHistory>,
}

impl SeedContext {
    /// Generates or loads data, splits it and trains a fresh model, all from `cfg.seed`.
    pub fn prepare(cfg: &ExperimentConfig) -> Result<Self> {
        let (train_set, val, test) = splits(cfg)?;
        let mut model = Mlp::new(&cfg.layer_sizes(&train_set), cfg.model.activation, cfg.init_seed())?;
        let history = train(&mut model, &train_set, &cfg.train, None)?;
        Ok(Self {
            seed: cfg.seed,
            train: train_set,
            val,
            test,
            model,
            history: Some(history),
        })
    }

    /// Uses `model` instead of training one.
    pub fn with_model(cfg: &ExperimentConfig, model: Mlp) -> Result<Self> {
        let (train_set, val, test) = splits(cfg)?;
        if model.input_dim() != train_set.dim() || model.num_classes() != train_set.num_classes() {
            return Err(Error::config(format!(
                "checkpoint expects {} features and {} classes, data has {} and {}",
                model.input_dim(),
                model.num_classes(),
                train_set.dim(),
                train_set.num_classes()
            )));
        }
        Ok(Self {
            seed: cfg.seed,
            train: train_set,
            val,
            test,
            model,
            history: None,
        })
    }
}

pub fn splits(cfg: &ExperimentConfig) -> Result<(GroupedDataset, GroupedDataset, GroupedDataset)> {
    let data = cfg.load_dataset()?;
    split(&data, &cfg.split)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub method: PruneMethod,
    pub beta: Option<f64>,
    pub pruning_ratio: f64,
    pub seed: u64,
    pub pruned_fraction: f64,
    pub val: FairnessReport,
    pub test: FairnessReport,
}

/// Medians over seeds for one (method, β, ratio) cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: PruneMethod,
    pub beta: Option<f64>,
    pub pruning_ratio: f64,
    pub seeds: usize,
    pub val_f1_avg: f64,
    pub val_eopp1: f64,
    pub val_eodd: f64,
    pub test_f1_avg: f64,
    pub test_eopp0: f64,
    pub test_eopp1: f64,
    pub test_eodd: f64,
    pub test_recall_avg: f64,
    /// `val_f1_avg - lambda * val_eopp1`.
    pub score: f64,
    /// Non-dominated in (val_f1_avg up, val_eopp1 down) among FairPrune cells.
    pub pareto: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub criterion: String,
    pub lambda: f64,
    pub best: CellSummary,
    /// Best β at each ratio, next to the OBD cell at the same ratio when available.
    pub per_ratio: Vec<RatioSelection>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSelection {
    pub pruning_ratio: f64,
    pub fairprune: CellSummary,
    pub obd: Option<CellSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VanillaRow {
    pub seed: u64,
    pub val: FairnessReport,
    pub test: FairnessReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub cells: Vec<CellSummary>,
    pub vanilla: Vec<VanillaRow>,
    pub selection: Selection,
}

pub fn median(values: &mut [f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn schedule_for(base: &PruneSchedule, method: PruneMethod, beta: f64, ratio: f64) -> PruneSchedule {
    PruneSchedule {
        method,
        beta,
        target_ratio: ratio,
        p_per_iteration: if ratio > 0.0 { base.p_per_iteration.min(ratio) } else { base.p_per_iteration },
        stop_eopp1_below: None,
        report_first_order: false,
        ..base.clone()
    }
}

/// Pruned models at each of `ratios` (in the given order) for one method and β.
pub fn prune_at_ratios(
    model: &Mlp,
    data: &GroupedDataset,
    base: &PruneSchedule,
    method: PruneMethod,
    beta: f64,
    ratios: &[f64],
) -> Result<Vec<(Mlp, PruningMask)>> {
    let n = model.num_params();
    let longest = ratios.iter().copied().fold(0.0, f64::max);
    let long_schedule = schedule_for(base, method, beta, longest);
    let long_targets = long_schedule.cumulative_targets(n)?;

    // Iteration of the long run at which each ratio can be read off, if any.
    let mut wanted: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut separate = Vec::new();
    for (slot, &ratio) in ratios.iter().enumerate() {
        let s = schedule_for(base, method, beta, ratio);
        let targets = s.cumulative_targets(n)?;
        if s.p_per_iteration == long_schedule.p_per_iteration && long_targets.starts_with(&targets) {
            wanted.entry(targets.len()).or_default().push(slot);
        } else {
            separate.push(slot);
        }
    }

    let mut out: Vec<Option<(Mlp, PruningMask)>> = vec![None; ratios.len()];
    let mut calls = 0usize;
    prune_observed(model, data, &long_schedule, &mut |m: &Mlp, mask: &PruningMask| {
        if let Some(slots) = wanted.get(&calls) {
            for &slot in slots {
                out[slot] = Some((m.clone(), mask.clone()));
            }
        }
        calls += 1;
        Ok(None)
    })?;
    for slot in separate {
        let s = schedule_for(base, method, beta, ratios[slot]);
        let outcome = prune_observed(model, data, &s, &mut |_: &Mlp, _: &PruningMask| Ok(None))?;
        out[slot] = Some((outcome.model, outcome.mask));
    }
    out.into_iter()
        .map(|o| o.ok_or_else(|| Error::Invariant("grid ratio was never reached".into())))
        .collect()
}

struct SeedRows {
    vanilla: VanillaRow,
    rows: Vec<GridRow>,
}

fn run_seed(ctx: &SeedContext, cfg: &ExperimentConfig) -> Result<SeedRows> {
    let options = &cfg.metrics;
    let eval = |m: &Mlp| -> Result<(FairnessReport, FairnessReport)> {
        Ok((evaluate(m, &ctx.val, options)?, evaluate(m, &ctx.test, options)?))
    };
    let (val, test) = eval(&ctx.model)?;
    let vanilla = VanillaRow {
        seed: ctx.seed,
        val,
        test,
    };
    let mut jobs: Vec<(PruneMethod, Option<f64>)> =
        cfg.grid.betas.iter().map(|&b| (PruneMethod::Fairprune, Some(b))).collect();
    if cfg.grid.include_obd {
        jobs.push((PruneMethod::Obd, None));
    }
    let per_job: Vec<Result<Vec<GridRow>>> = jobs
        .par_iter()
        .map(|&(method, beta)| {
            let models = prune_at_ratios(
                &ctx.model,
                &ctx.train,
                &cfg.prune,
                method,
                beta.unwrap_or(0.0),
                &cfg.grid.ratios,
            )?;
            cfg.grid
                .ratios
                .iter()
                .zip(models)
                .map(|(&ratio, (m, mask))| {
                    let (val, test) = eval(&m)?;
                    Ok(GridRow {
                        method,
                        beta,
                        pruning_ratio: ratio,
                        seed: ctx.seed,
                        pruned_fraction: mask.pruned_fraction(),
                        val,
                        test,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_job {
        rows.extend(r?);
    }
    Ok(SeedRows { vanilla, rows })
}

fn cell_order(a: &GridRow, b: &GridRow) -> std::cmp::Ordering {
    let method = |m: PruneMethod| m as u8;
    method(a.method)
        .cmp(&method(b.method))
        .then(a.beta.unwrap_or(-1.0).total_cmp(&b.beta.unwrap_or(-1.0)))
        .then(a.pruning_ratio.total_cmp(&b.pruning_ratio))
}

fn row_order(a: &GridRow, b: &GridRow) -> std::cmp::Ordering {
    cell_order(a, b).then(a.seed.cmp(&b.seed))
}

fn summarize(rows: &[GridRow], lambda: f64) -> Vec<CellSummary> {
    let mut cells: Vec<CellSummary> = Vec::new();
    for group in rows.chunk_by(|a, b| cell_order(a, b).is_eq()) {
        let med = |f: &dyn Fn(&GridRow) -> f64| median(&mut group.iter().map(f).collect::<Vec<_>>());
        let val_f1_avg = med(&|r| r.val.f1_avg);
        let val_eopp1 = med(&|r| r.val.eopp1);
        cells.push(CellSummary {
            method: group[0].method,
            beta: group[0].beta,
            pruning_ratio: group[0].pruning_ratio,
            seeds: group.len(),
            val_f1_avg,
            val_eopp1,
            val_eodd: med(&|r| r.val.eodd),
            test_f1_avg: med(&|r| r.test.f1_avg),
            test_eopp0: med(&|r| r.test.eopp0),
            test_eopp1: med(&|r| r.test.eopp1),
            test_eodd: med(&|r| r.test.eodd),
            test_recall_avg: med(&|r| r.test.recall_avg),
            score: val_f1_avg - lambda * val_eopp1,
            pareto: false,
        });
    }
    let fair: Vec<usize> = (0..cells.len())
        .filter(|&i| cells[i].method == PruneMethod::Fairprune)
        .collect();
    for &i in &fair {
        let a = &cells[i];
        let dominated = fair.iter().any(|&j| {
            let b = &cells[j];
            b.val_f1_avg >= a.val_f1_avg
                && b.val_eopp1 <= a.val_eopp1
                && (b.val_f1_avg > a.val_f1_avg || b.val_eopp1 < a.val_eopp1)
        });
        cells[i].pareto = !dominated;
    }
    cells
}

fn best_of<'a>(cells: impl Iterator<Item = &'a CellSummary>) -> Option<&'a CellSummary> {
    // First maximum in row order wins ties.
    cells.fold(None, |best: Option<&CellSummary>, c| match best {
        Some(b) if b.score >= c.score => Some(b),
        _ => Some(c),
    })
}

fn select(cells: &[CellSummary], ratios: &[f64], lambda: f64) -> Result<Selection> {
    let fair = || cells.iter().filter(|c| c.method == PruneMethod::Fairprune);
    let best = best_of(fair()).ok_or_else(|| Error::Invariant("grid produced no FairPrune cells".into()))?;
    let mut sorted_ratios = ratios.to_vec();
    sorted_ratios.sort_by(f64::total_cmp);
    sorted_ratios.dedup();
    let per_ratio = sorted_ratios
        .iter()
        .filter_map(|&r| {
            let fp = best_of(fair().filter(|c| c.pruning_ratio == r))?;
            let obd = cells
                .iter()
                .find(|c| c.method == PruneMethod::Obd && c.pruning_ratio == r)
                .cloned();
            Some(RatioSelection {
                pruning_ratio: r,
                fairprune: fp.clone(),
                obd,
            })
        })
        .collect();
    Ok(Selection {
        criterion: "maximize median val f1_avg - lambda * median val eopp1 (stand-in scalarization)".into(),
        lambda,
        best: best.clone(),
        per_ratio,
    })
}

/// Runs the grid in `cfg.grid`. Each seed trains its own vanilla model
/// unless `model` is given, in which case it is shared and seeds only vary
/// the data split and saliency batches.
pub fn run_grid(cfg: &ExperimentConfig, model: Option<&Mlp>) -> Result<GridResult> {
    cfg.validate()?;
    let per_seed: Vec<Result<SeedRows>> = cfg
        .grid
        .seeds
        .par_iter()
        .map(|&seed| {
            let seeded = cfg.with_seed(seed);
            let ctx = match model {
                Some(m) => SeedContext::with_model(&seeded, m.clone())?,
                None => SeedContext::prepare(&seeded)?,
            };
            run_seed(&ctx, &seeded)
        })
        .collect();
    let mut rows = Vec::new();
    let mut vanilla = Vec::new();
    for s in per_seed {
        let s = s?;
        vanilla.push(s.vanilla);
        rows.extend(s.rows);
    }
    rows.sort_by(row_order);
    vanilla.sort_by_key(|v| v.seed);
    let cells = summarize(&rows, cfg.grid.lambda);
    let selection = select(&cells, &cfg.grid.ratios, cfg.grid.lambda)?;
    Ok(GridResult {
        rows,
        cells,
        vanilla,
        selection,
    })
}

impl GridResult {
    pub const ROWS_HEADER: &'static str = "method,beta,pruning_ratio,seed,pruned_fraction,split,eopp0,eopp1,eodd,precision_avg,recall_avg,f1_g0,f1_g1,f1_avg,f1_diff";
    pub const CELLS_HEADER: &'static str = "method,beta,pruning_ratio,seeds,val_f1_avg,val_eopp1,val_eodd,test_f1_avg,test_eopp0,test_eopp1,test_eodd,test_recall_avg,score,pareto";

    pub fn rows_csv(&self) -> String {
        let mut out = format!("{}\n", Self::ROWS_HEADER);
        for r in &self.rows {
            for (name, m) in [("val", &r.val), ("test", &r.test)] {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                    r.method,
                    fmt_beta(r.beta),
                    r.pruning_ratio,
                    r.seed,
                    r.pruned_fraction,
                    name,
                    m.eopp0,
                    m.eopp1,
                    m.eodd,
                    m.precision_avg,
                    m.recall_avg,
                    m.f1_g0,
                    m.f1_g1,
                    m.f1_avg,
                    m.f1_diff
                ));
            }
        }
        out
    }

    /// All cells, or only Pareto cells when `frontier_only`.
    pub fn cells_csv(&self, frontier_only: bool) -> String {
        let mut out = format!("{}\n", Self::CELLS_HEADER);
        for c in self.cells.iter().filter(|c| !frontier_only || c.pareto) {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
                c.method,
                fmt_beta(c.beta),
                c.pruning_ratio,
                c.seeds,
                c.val_f1_avg,
                c.val_eopp1,
                c.val_eodd,
                c.test_f1_avg,
                c.test_eopp0,
                c.test_eopp1,
                c.test_eodd,
                c.test_recall_avg,
                c.score,
                c.pareto
            ));
        }
        out
    }
}

fn fmt_beta(beta: Option<f64>) -> String {
    beta.map(|b| b.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_cases() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&mut [5.0]), 5.0);
    }
}
