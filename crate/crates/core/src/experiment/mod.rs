//! Reproducible experiment harness: configuration, grid search and the
//! artifact-writing commands used by the CLI.

mod commands;
mod config;
mod grid;
mod manifest;

pub use commands::{
    cmd_eval, cmd_gen_data, cmd_grid, cmd_prune, cmd_report, cmd_train, PruneLog, SplitName, MODEL_FILE,
    PRUNED_FILE,
};
pub use config::{DatasetSource, ExperimentConfig, GridConfig, ModelConfig};
pub use grid::{
    median, prune_at_ratios, run_grid, splits, CellSummary, GridResult, GridRow, RatioSelection, SeedContext,
    Selection, VanillaRow,
};
pub use manifest::{sha256_hex, Manifest, CONFIG_FILE, MANIFEST_FILE};
