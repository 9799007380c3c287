//! Chronological splits, expanding-window cross-validation, grid search,
//! anomalous-class metrics and permutation importance.

mod grid;
mod importance;
mod metrics;
mod report;
mod split;

use thiserror::Error;

pub use grid::{best_cell, evaluate_cell, grid_search, CellResult, GridResult, GridSpec};
pub use importance::{permutation_importance, ImportanceEntry, ImportanceReport};
pub use metrics::{compute_metrics, f1_of, precision_recall_f1, MetricsReport};
pub use report::{ComparisonTable, TABLE_METRICS};
pub use split::{chronological_order, chronological_split, ts_cv_folds, Fold, SplitSpec};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least 5 rows to split, got {0}")]
    TooFewRows(usize),
    #[error("cannot cut {rows} rows into {segments} non-empty segments")]
    EmptySegment { rows: usize, segments: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("parameter grid is empty")]
    EmptyGrid,
    #[error("comparison table: {0}")]
    TableFormat(String),
}
