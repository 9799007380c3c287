//! Case- and item-level features: phase distributions, the billing-mode
//! mixture, and one-hot encoding.

mod encode;
mod gmm;
mod phase;
mod rows;

use thiserror::Error;

pub use encode::{
    encode, CategoricalField, EncodedMatrix, FeatureGroup, Vocabulary, NUMERIC_FEATURES,
};
pub use gmm::{
    billing_mode, billing_point, fit_billing_mode_gmm, fit_billing_mode_gmm_with, BillingModeModel,
    Cov2, GmmOptions, Point2,
};
pub use phase::{
    litigation_phases_used, phase_distribution, unique_code_count, PhaseBucket, PhaseDistribution,
};
pub use rows::{billing_points, build_feature_rows, log_days, FeatureRow};

use crate::ingest::IngestError;

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("case '{0}' has zero billed total; phase distribution undefined")]
    ZeroBilledTotal(String),
    #[error("cannot fit {k} mixture components to {n} points")]
    ComponentCount { k: usize, n: usize },
    #[error("non-finite input value")]
    NonFinite,
    #[error("no rows to encode")]
    EmptyRows,
    #[error(transparent)]
    Ingest(#[from] IngestError),
}
