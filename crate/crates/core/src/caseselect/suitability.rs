use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::dbscan::{ClusterAssignment, NOISE};
use super::SelectError;
use crate::featurize::{litigation_phases_used, PhaseBucket};
use crate::ingest::Case;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterUtilization {
    pub cluster: i32,
    pub size: usize,
    pub median_utilization: f64,
    pub suitable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub case_ids: Vec<String>,
    pub clusters: Vec<ClusterUtilization>,
}

/// Share of the five litigation phases a case bills into.
pub fn phase_utilization(case: &Case) -> f64 {
    litigation_phases_used(case) as f64 / PhaseBucket::LITIGATION_PHASES as f64
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Keeps every cluster whose median phase utilization reaches the threshold.
///
/// Returned case ids follow the assignment's order; noise is never selected.
pub fn select_suitable(
    assignment: &ClusterAssignment,
    cases: &[Case],
    utilization_threshold: f64,
) -> Result<Selection, SelectError> {
    let by_id: BTreeMap<&str, &Case> = cases.iter().map(|c| (c.case_id.as_str(), c)).collect();
    let mut per_cluster: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    for (id, &label) in assignment.case_ids.iter().zip(&assignment.labels) {
        if label == NOISE {
            continue;
        }
        let case = by_id
            .get(id.as_str())
            .ok_or_else(|| SelectError::UnknownCase(id.clone()))?;
        per_cluster
            .entry(label)
            .or_default()
            .push(phase_utilization(case));
    }
    let clusters: Vec<ClusterUtilization> = per_cluster
        .into_iter()
        .map(|(cluster, utils)| {
            let size = utils.len();
            let m = median(utils);
            ClusterUtilization {
                cluster,
                size,
                median_utilization: m,
                suitable: m >= utilization_threshold,
            }
        })
        .collect();
    let chosen: Vec<i32> = clusters
        .iter()
        .filter(|c| c.suitable)
        .map(|c| c.cluster)
        .collect();
    if chosen.is_empty() {
        return Err(SelectError::NoSuitableCluster(clusters));
    }
    let case_ids = assignment
        .case_ids
        .iter()
        .zip(&assignment.labels)
        .filter(|(_, l)| chosen.contains(l))
        .map(|(id, _)| id.clone())
        .collect();
    Ok(Selection { case_ids, clusters })
}
