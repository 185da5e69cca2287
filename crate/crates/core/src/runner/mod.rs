//! Experiment orchestration behind the `claprobe` command line: JSON
//! configuration, per-run output directories and one function per
//! subcommand.

mod commands;
mod config;

pub use commands::{
    cmd_eval, cmd_label, cmd_matrix, cmd_mitigate, cmd_synth, cmd_train, load_dataset, train_detector, EvalOutcome,
    GridPoint, MatrixOutcome, MitigateOutcome, RunLayout, TrainOutcome,
};
pub use config::{ExperimentConfig, LrChoice, ProbeSpec, SplitFractions, LR_GRID, WORKERS_ENV};
