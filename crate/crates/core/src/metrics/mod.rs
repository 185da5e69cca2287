//! Detector scoring: AUC, macro-F1, operating-threshold selection, seed
//! aggregation, and the in-distribution / out-of-distribution matrix runner.

mod auc;
mod f1;
mod matrix;
mod summary;

pub use auc::{auc, auc_scores, ScoreRow, ScoreTable};
pub use f1::{macro_f1, pick_threshold, Threshold};
pub use matrix::{run_matrix, MatrixCell, MatrixConfig, MatrixMode, MatrixReport, NamedDataset};
pub use summary::{aggregate_seeds, pct_gain, RunSummary};
