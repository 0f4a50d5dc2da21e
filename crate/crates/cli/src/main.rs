use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairprune::experiment::{
    cmd_eval, cmd_gen_data, cmd_grid, cmd_prune, cmd_report, cmd_train, ExperimentConfig, SplitName,
};
use fairprune::Result;

/// Fairness-aware pruning experiments on grouped classification data.
#[derive(Parser, Debug)]
#[command(name = "fairprune", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON experiment config; built-in defaults when omitted.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output (run) directory.
    #[arg(long, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    /// Overrides the config's top-level seed.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the dataset and its train/val/test splits as CSV.
    GenData(Common),
    /// Train the vanilla model.
    Train(Common),
    /// Prune a trained checkpoint (default: <out>/model.ckpt).
    Prune {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test", value_parser = ["train", "val", "test"])]
        split: String,
    },
    /// Run the beta x pruning-ratio grid.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Shared pre-trained model; otherwise each seed trains its own.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Summarise the reports in a run directory.
    Report {
        #[arg(long, value_name = "DIR", default_value = "run")]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let seed = common.seed.unwrap_or(cfg.seed);
    Ok(cfg.with_seed(seed))
}

/// Writes to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn print_json<T: serde::Serialize>(value: &T) {
    emit(&(serde_json::to_string_pretty(value).expect("report serialises") + "\n"));
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(common) => {
            cmd_gen_data(&load_config(&common)?, &common.out)?;
            emit(&format!("wrote dataset splits to {}\n", common.out.display()));
        }
        Command::Train(common) => {
            let report = cmd_train(&load_config(&common)?, &common.out)?;
            emit(&report.render("Vanilla model, test"));
        }
        Command::Prune { common, checkpoint } => {
            let report = cmd_prune(&load_config(&common)?, &common.out, checkpoint.as_deref())?;
            emit(&report.render("Pruned model, test"));
        }
        Command::Eval {
            common,
            checkpoint,
            split,
        } => {
            let split: SplitName = split.parse()?;
            let report = cmd_eval(&load_config(&common)?, &common.out, checkpoint.as_deref(), split)?;
            print_json(&report);
        }
        Command::Grid { common, checkpoint } => {
            let result = cmd_grid(&load_config(&common)?, &common.out, checkpoint.as_deref())?;
            emit(&format!(
                "{} rows, {} cells, {} on the frontier; selected beta {} at ratio {}\n",
                result.rows.len(),
                result.cells.len(),
                result.cells.iter().filter(|c| c.pareto).count(),
                result.selection.best.beta.unwrap_or_default(),
                result.selection.best.pruning_ratio
            ));
        }
        Command::Report { out } => emit(&cmd_report(Path::new(&out))?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
