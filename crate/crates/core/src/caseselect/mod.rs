//! Isolates litigation cases whose billing is spread across the case lifecycle:
//! prefilter, SVD, t-SNE, DBSCAN, then a phase-utilization rule per cluster.

mod dbscan;
mod suitability;
mod svd;
mod tsne;

use thiserror::Error;

pub use dbscan::{dbscan, dbscan_embedding, ClusterAssignment, NOISE};
pub use suitability::{phase_utilization, select_suitable, ClusterUtilization, Selection};
pub use svd::{center_columns, decompose, svd_reduce, Decomposition, ReducedMatrix};
pub use tsne::{
    conditional_probabilities, tsne_embed, Embedding2D, KlCheckpoint, TsneInit, TsneParams,
};

use crate::featurize::{litigation_phases_used, phase_distribution, FeaturizeError};
use crate::ingest::{Case, Corpus};
use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error(
        "no '{category}' case has >= {min_items} items across >= {min_phases} phases; \
         relax prefilter.min_items or prefilter.min_phases"
    )]
    EmptyPrefilter {
        category: String,
        min_items: usize,
        min_phases: usize,
    },
    #[error("need at least 2 cases, got {0}")]
    TooFewRows(usize),
    #[error("phase matrix has zero variance")]
    ZeroVariance,
    #[error("perplexity {perplexity} infeasible for {n} points (need n > 3 * perplexity)")]
    PerplexityInfeasible { perplexity: f64, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("case '{0}' missing from case list")]
    UnknownCase(String),
    #[error("no cluster meets the utilization threshold: {}", describe_clusters(.0))]
    NoSuitableCluster(Vec<ClusterUtilization>),
    #[error(transparent)]
    Featurize(#[from] FeaturizeError),
}

fn describe_clusters(c: &[ClusterUtilization]) -> String {
    if c.is_empty() {
        return "all cases were labeled noise".into();
    }
    c.iter()
        .map(|u| {
            format!(
                "cluster {} (n={}, median utilization {:.3})",
                u.cluster, u.size, u.median_utilization
            )
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Cases of `category` with enough items spread over enough litigation phases.
pub fn prefilter_cases(
    corpus: &Corpus,
    category: &str,
    min_items: usize,
    min_phases: usize,
) -> Result<Vec<Case>, SelectError> {
    let kept: Vec<Case> = corpus
        .cases
        .iter()
        .filter(|c| {
            c.category == category
                && c.items.len() >= min_items
                && litigation_phases_used(c) >= min_phases
        })
        .cloned()
        .collect();
    if kept.is_empty() {
        return Err(SelectError::EmptyPrefilter {
            category: category.to_string(),
            min_items,
            min_phases,
        });
    }
    Ok(kept)
}

/// N x 8 matrix of phase fractions, one row per case.
pub fn phase_matrix(cases: &[Case]) -> Result<Matrix, SelectError> {
    let rows = cases
        .iter()
        .map(|c| phase_distribution(c).map(|d| d.fractions))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Matrix::from_rows(&rows))
}

pub fn embedding_csv(embedding: &Embedding2D, assignment: &ClusterAssignment) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["case_id", "x", "y", "cluster"])
        .expect("in-memory csv write");
    for ((id, xy), label) in embedding
        .case_ids
        .iter()
        .zip(&embedding.coordinates)
        .zip(&assignment.labels)
    {
        w.write_record([
            id.clone(),
            xy[0].to_string(),
            xy[1].to_string(),
            label.to_string(),
        ])
        .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
}
