//! The batch commands behind the CLI. Each writes its artifacts into an
//! output directory together with `config.json` and a refreshed manifest.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::grid::{run_grid, splits, GridResult, SeedContext};
use super::manifest::{Manifest, CONFIG_FILE};
use crate::data::save_csv;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, format_milli, FairnessReport};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{LayerPart, Mlp};
use crate::pruner::{prune, IterationLog, PruneSchedule, PruneStep};
use crate::saliency::{export_saliency_distribution, write_distribution_csv, Normalization};

pub const MODEL_FILE: &str = "model.ckpt";
pub const PRUNED_FILE: &str = "pruned.ckpt";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for SplitName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        })
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "val" => Ok(SplitName::Val),
            "test" => Ok(SplitName::Test),
            other => Err(Error::config(format!("unknown split {other:?}"))),
        }
    }
}

fn prepare_dir(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join(CONFIG_FILE), cfg.to_json() + "\n")?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the full dataset and its three splits as CSV.
pub fn cmd_gen_data(cfg: &ExperimentConfig, out: &Path) -> Result<()> {
    prepare_dir(cfg, out)?;
    let data = cfg.load_dataset()?;
    let (train, val, test) = crate::data::split(&data, &cfg.split)?;
    save_csv(&data, &out.join("data.csv"))?;
    save_csv(&train, &out.join("train.csv"))?;
    save_csv(&val, &out.join("val.csv"))?;
    save_csv(&test, &out.join("test.csv"))?;
    Manifest::refresh(out)?;
    Ok(())
}

/// Trains the vanilla model and evaluates it on validation and test.
pub fn cmd_train(cfg: &ExperimentConfig, out: &Path) -> Result<FairnessReport> {
    prepare_dir(cfg, out)?;
    let ctx = SeedContext::prepare(cfg)?;
    Checkpoint::new(ctx.model.clone(), None).save(&out.join(MODEL_FILE))?;
    let mut history = String::from("epoch,loss\n");
    if let Some(h) = &ctx.history {
        for (epoch, loss) in h.losses.iter().enumerate() {
            let _ = writeln!(history, "{epoch},{loss}");
        }
    }
    std::fs::write(out.join("train_history.csv"), history)?;
    write_json(&out.join("vanilla_val.json"), &evaluate(&ctx.model, &ctx.val, &cfg.metrics)?)?;
    let test = evaluate(&ctx.model, &ctx.test, &cfg.metrics)?;
    write_json(&out.join("vanilla_test.json"), &test)?;
    Manifest::refresh(out)?;
    Ok(test)
}

fn load_model(out: &Path, checkpoint: Option<&Path>, default: &str) -> Result<(PathBuf, Checkpoint)> {
    let path = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| out.join(default));
    let ckpt = Checkpoint::load(&path)?;
    Ok((path, ckpt))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PruneLog {
    pub schedule: PruneSchedule,
    pub num_params: usize,
    pub pruned_count: usize,
    pub iterations: IterationLog,
    pub steps: Vec<PruneStep>,
    /// Saliency batches are drawn without replacement, in epochs that continue across iterations.
    pub sampling: String,
}

/// Prunes the trained model (default `model.ckpt` in `out`) with `cfg.prune`.
pub fn cmd_prune(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> Result<FairnessReport> {
    prepare_dir(cfg, out)?;
    let (_, ckpt) = load_model(out, checkpoint, MODEL_FILE)?;
    let ctx = SeedContext::with_model(cfg, ckpt.model)?;
    let monitor = |m: &Mlp| evaluate(m, &ctx.val, &cfg.metrics);
    let outcome = prune(&ctx.model, &ctx.train, &cfg.prune, Some(&monitor))?;

    Checkpoint::new(outcome.model.clone(), Some(outcome.mask.clone())).save(&out.join(PRUNED_FILE))?;
    outcome.log.write_csv(&out.join("iterations.csv"))?;
    if let Some([g0, g1]) = &outcome.initial_group_saliency {
        let layer = cfg.saliency_export_layer;
        if layer >= ctx.model.num_layers() {
            return Err(Error::config(format!(
                "saliency_export_layer {layer} out of range for {} layers",
                ctx.model.num_layers()
            )));
        }
        let range = ctx.model.layer_range(layer, LayerPart::Weights);
        let rows = export_saliency_distribution(g0, g1, range, Normalization::MinMax)?;
        write_distribution_csv(&rows, &out.join("saliency_distribution.csv"))?;
    }
    let sampling = if cfg.prune.with_replacement {
        "with replacement"
    } else {
        "without replacement, epochs continue across iterations"
    };
    write_json(
        &out.join("prune_log.json"),
        &PruneLog {
            schedule: cfg.prune.clone(),
            num_params: outcome.mask.len(),
            pruned_count: outcome.mask.pruned_count(),
            iterations: outcome.log.clone(),
            steps: outcome.mask.history().to_vec(),
            sampling: sampling.into(),
        },
    )?;
    write_json(&out.join("pruned_val.json"), &evaluate(&outcome.model, &ctx.val, &cfg.metrics)?)?;
    let test = evaluate(&outcome.model, &ctx.test, &cfg.metrics)?;
    write_json(&out.join("pruned_test.json"), &test)?;
    Manifest::refresh(out)?;
    Ok(test)
}

/// Evaluates a checkpoint (default `pruned.ckpt`, else `model.ckpt`) on one split.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    out: &Path,
    checkpoint: Option<&Path>,
    split: SplitName,
) -> Result<FairnessReport> {
    prepare_dir(cfg, out)?;
    let default = if out.join(PRUNED_FILE).exists() { PRUNED_FILE } else { MODEL_FILE };
    let (_, ckpt) = load_model(out, checkpoint, default)?;
    let mut model = ckpt.model;
    if let Some(mask) = &ckpt.mask {
        mask.apply(&mut model)?;
    }
    let (train, val, test) = splits(cfg)?;
    let data = match split {
        SplitName::Train => train,
        SplitName::Val => val,
        SplitName::Test => test,
    };
    if model.input_dim() != data.dim() || model.num_classes() != data.num_classes() {
        return Err(Error::config("checkpoint does not match the configured dataset"));
    }
    let report = evaluate(&model, &data, &cfg.metrics)?;
    write_json(&out.join(format!("eval_{split}.json")), &report)?;
    Manifest::refresh(out)?;
    Ok(report)
}

/// Runs the β × ratio grid. A checkpoint, if given, replaces per-seed training.
pub fn cmd_grid(cfg: &ExperimentConfig, out: &Path, checkpoint: Option<&Path>) -> Result<GridResult> {
    prepare_dir(cfg, out)?;
    let model = match checkpoint {
        Some(p) => Some(Checkpoint::load(p)?.model),
        None => None,
    };
    let result = run_grid(cfg, model.as_ref())?;
    std::fs::write(out.join("grid.csv"), result.rows_csv())?;
    std::fs::write(out.join("beta_tradeoff.csv"), result.cells_csv(false))?;
    std::fs::write(out.join("frontier.csv"), result.cells_csv(true))?;
    write_json(&out.join("selection.json"), &result.selection)?;
    write_json(&out.join("grid.json"), &result)?;
    Manifest::refresh(out)?;
    Ok(result)
}

const REPORTS: [(&str, &str); 7] = [
    ("vanilla_val.json", "Vanilla model, validation"),
    ("vanilla_test.json", "Vanilla model, test"),
    ("pruned_val.json", "Pruned model, validation"),
    ("pruned_test.json", "Pruned model, test"),
    ("eval_train.json", "Evaluation, train"),
    ("eval_val.json", "Evaluation, validation"),
    ("eval_test.json", "Evaluation, test"),
];

/// Renders every report found in `run_dir` into `summary.txt` and returns it.
pub fn cmd_report(run_dir: &Path) -> Result<String> {
    if !run_dir.is_dir() {
        return Err(Error::data(format!("run directory {} does not exist", run_dir.display())));
    }
    let mut summary = String::new();
    for (file, title) in REPORTS {
        let path = run_dir.join(file);
        if path.exists() {
            let report: FairnessReport = read_json(&path)?;
            summary.push_str(&report.render(title));
            summary.push('\n');
        }
    }
    let selection = run_dir.join("selection.json");
    if selection.exists() {
        let s: super::grid::Selection = read_json(&selection)?;
        let _ = writeln!(summary, "Grid selection ({}, lambda {})", s.criterion, s.lambda);
        let _ = writeln!(
            summary,
            "{:<8}{:>8}{:>12}{:>12}{:>14}{:>12}",
            "ratio", "beta", "test F1avg", "test Eopp1", "Eopp0 (x1e-3)", "OBD Eopp1"
        );
        for r in &s.per_ratio {
            let fp = &r.fairprune;
            let obd = r.obd.as_ref().map(|o| format!("{:.3}", o.test_eopp1)).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                summary,
                "{:<8}{:>8}{:>12.3}{:>12.3}{:>14}{:>12}",
                fp.pruning_ratio,
                fp.beta.map(|b| b.to_string()).unwrap_or_default(),
                fp.test_f1_avg,
                fp.test_eopp1,
                format_milli(fp.test_eopp0),
                obd
            );
        }
        let b = &s.best;
        let _ = writeln!(
            summary,
            "best: beta {} ratio {} (val F1avg {:.3}, val Eopp1 {:.3})",
            b.beta.map(|v| v.to_string()).unwrap_or_default(),
            b.pruning_ratio,
            b.val_f1_avg,
            b.val_eopp1
        );
    }
    if summary.is_empty() {
        return Err(Error::data(format!("no reports found in {}", run_dir.display())));
    }
    std::fs::write(run_dir.join("summary.txt"), &summary)?;
    Manifest::refresh(run_dir)?;
    Ok(summary)
}
