use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::gmm::{billing_mode, billing_point, BillingModeModel, Point2};
use super::phase::unique_code_count;
use super::FeaturizeError;
use crate::ingest::{days_since_open, Case, ItemType, TimekeeperRole};

/// Case- and item-level attributes of one line-item, as fed to the models.
///
/// `timekeeper_role`, `days_since_open` and the dates travel with the row for
/// anomaly injection and chronological splitting; they are not encoded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub line_id: String,
    pub case_id: String,
    pub category: String,
    pub unique_code_count: u32,
    pub task_code: String,
    pub activity_code: String,
    pub item_type: ItemType,
    pub timekeeper_role: TimekeeperRole,
    pub billing_mode: usize,
    pub days_since_open: u32,
    pub log_days_since_open: f64,
    pub service_date: NaiveDate,
    pub open_date: NaiveDate,
}

pub fn log_days(days: u32) -> f64 {
    (days as f64).ln_1p()
}

/// GMM input points for every item of the given cases, in case/item order.
pub fn billing_points(cases: &[Case]) -> Vec<Point2> {
    cases
        .iter()
        .flat_map(|c| &c.items)
        .map(|it| billing_point(it.rate.to_f64(), it.total.to_f64()))
        .collect()
}

pub fn build_feature_rows(
    cases: &[Case],
    gmm: &BillingModeModel,
) -> Result<Vec<FeatureRow>, FeaturizeError> {
    let mut rows = Vec::with_capacity(cases.iter().map(|c| c.items.len()).sum());
    for case in cases {
        let codes = unique_code_count(case);
        for it in &case.items {
            let days = days_since_open(it, case)?;
            let mode = billing_mode(gmm, &billing_point(it.rate.to_f64(), it.total.to_f64()))?;
            rows.push(FeatureRow {
                line_id: it.line_id.clone(),
                case_id: case.case_id.clone(),
                category: case.category.clone(),
                unique_code_count: codes,
                task_code: it.task_code.clone(),
                activity_code: it.activity_code.clone(),
                item_type: it.item_type,
                timekeeper_role: it.timekeeper_role,
                billing_mode: mode,
                days_since_open: days,
                log_days_since_open: log_days(days),
                service_date: it.service_date,
                open_date: case.open_date,
            });
        }
    }
    Ok(rows)
}
