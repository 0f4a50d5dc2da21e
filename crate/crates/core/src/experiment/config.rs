use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{gen_synthetic_biased, load_csv, CsvSchema, GroupedDataset, SplitSpec, SynthConfig};
use crate::error::{Error, Result};
use crate::metrics::MetricOptions;
use crate::nn::{Activation, TrainConfig};
use crate::pruner::PruneSchedule;
use crate::rng::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SynthConfig),
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic(SynthConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden: vec![32, 32],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub betas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Weight of Eopp1 in the selection score `f1_avg - lambda * eopp1`.
    pub lambda: f64,
    /// Also run OBD at every ratio as a baseline.
    pub include_obd: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            betas: vec![0.0, 0.1, 0.2, 0.33, 0.5, 1.0],
            ratios: vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            seeds: vec![0, 1, 2, 3, 4],
            lambda: 1.0,
            include_obd: true,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() || self.ratios.is_empty() || self.seeds.is_empty() {
            return Err(Error::config("grid betas, ratios and seeds must be non-empty"));
        }
        if self.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::config("grid betas must be finite and non-negative"));
        }
        if self.ratios.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(Error::config("grid ratios must lie in [0, 1)"));
        }
        if !self.lambda.is_finite() {
            return Err(Error::config("grid lambda must be finite"));
        }
        Ok(())
    }
}

/// Everything a run needs. Per-stage seeds (data, split, init, training,
/// pruning) are always derived from the top-level `seed`; seeds written in
/// the nested sections are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetSource,
    pub split: SplitSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub prune: PruneSchedule,
    pub metrics: MetricOptions,
    pub grid: GridConfig,
    /// Layer whose weights are exported as per-group saliency distributions.
    pub saliency_export_layer: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSource::default(),
            split: SplitSpec::default(),
            model: ModelConfig::default(),
            train: TrainConfig {
                epochs: 60,
                batch_size: 32,
                learning_rate: 3e-3,
                ..TrainConfig::default()
            },
            prune: PruneSchedule {
                batches_per_iteration: 100,
                batch_size: 16,
                ..PruneSchedule::fitzpatrick_preset()
            },
            metrics: MetricOptions::default(),
            grid: GridConfig::default(),
            saliency_export_layer: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)?;
        Ok(cfg.with_seed(cfg.seed))
    }

    /// Copy with `seed` as the top-level seed and every stage seed derived from it.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut cfg = self.clone();
        cfg.seed = seed;
        if let DatasetSource::Synthetic(s) = &mut cfg.dataset {
            s.seed = derive_seed(seed, stream::DATA);
        }
        cfg.split.seed = derive_seed(seed, stream::SPLIT);
        cfg.train.seed = derive_seed(seed, stream::TRAIN);
        cfg.prune.seed = derive_seed(seed, stream::PRUNE);
        cfg
    }

    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, stream::INIT)
    }

    pub fn validate(&self) -> Result<()> {
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        self.split.validate()?;
        self.train.validate()?;
        self.prune.validate()?;
        self.grid.validate()?;
        if self.model.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<GroupedDataset> {
        match &self.dataset {
            DatasetSource::Synthetic(s) => gen_synthetic_biased(s),
            DatasetSource::Csv { path, schema } => load_csv(path, schema),
        }
    }

    pub fn layer_sizes(&self, data: &GroupedDataset) -> Vec<usize> {
        let mut sizes = vec![data.dim()];
        sizes.extend(&self.model.hidden);
        sizes.push(data.num_classes());
        sizes
    }

    /// Canonical JSON used for hashing and for the copy stored with a run.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_json() {
        let cfg = ExperimentConfig::default().with_seed(7);
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        cfg.validate().unwrap();
    }

    #[test]
    fn stage_seeds_follow_top_level_seed() {
        let a = ExperimentConfig::default().with_seed(1);
        let b = ExperimentConfig::default().with_seed(2);
        assert_ne!(a.train.seed, b.train.seed);
        assert_ne!(a.prune.seed, a.train.seed);
        assert_eq!(a, ExperimentConfig::default().with_seed(1));
    }

    #[test]
    fn unknown_fields_are_config_errors() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"sed": 1}"#).unwrap_err();
        assert_eq!(Error::from(err).exit_code(), 2);
        let csv: ExperimentConfig =
            serde_json::from_str(r#"{"dataset": {"kind": "csv", "path": "x.csv"}}"#).unwrap();
        assert!(matches!(csv.dataset, DatasetSource::Csv { .. }));
    }

    #[test]
    fn empty_grid_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.grid.betas.clear();
        assert!(cfg.validate().is_err());
    }
}
