//! Rare-combination counting, lifecycle anomaly injection and the synthetic
//! corpus generator.

mod combos;
mod dataset;
mod generator;
mod inject;

use thiserror::Error;

pub use combos::{combo_counts, flag_global_anomalies, ComboKey, ComboStats, LifecycleStats};
pub use dataset::{read_dataset_csv, write_dataset_csv, DatasetManifest, DATASET_COLUMNS};
pub use generator::{gen_corpus, phase_order_audit, CorpusSpec, LITIGATION};
pub use inject::{
    inject_anomalies, injected_days, InjectParams, InjectionSummary, LabeledDataset, LabeledRow,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
    #[error("no combination is eligible for injection (min_days_floor = {floor})")]
    NoEligibleCombos { floor: u32 },
    #[error("target fraction {target} not reached after {draws} draws ({injected} rows injected)")]
    TargetUnreachable {
        target: f64,
        injected: usize,
        draws: usize,
    },
    #[error("dataset is missing columns: {0}")]
    MissingColumns(String),
    #[error("dataset csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
}
