use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::inject::{InjectParams, InjectionSummary, LabeledDataset, LabeledRow};
use super::SynthError;
use crate::featurize::FeatureRow;

pub const DATASET_COLUMNS: [&str; 15] = [
    "line_id",
    "case_id",
    "category",
    "unique_code_count",
    "task_code",
    "activity_code",
    "item_type",
    "timekeeper_role",
    "billing_mode",
    "days_since_open",
    "log_days_since_open",
    "service_date",
    "open_date",
    "label",
    "source_line_id",
];

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    line_id: String,
    case_id: String,
    category: String,
    unique_code_count: u32,
    task_code: String,
    activity_code: String,
    item_type: crate::ingest::ItemType,
    timekeeper_role: crate::ingest::TimekeeperRole,
    billing_mode: usize,
    days_since_open: u32,
    log_days_since_open: f64,
    service_date: chrono::NaiveDate,
    open_date: chrono::NaiveDate,
    label: u8,
    source_line_id: String,
}

impl From<&LabeledRow> for CsvRow {
    fn from(r: &LabeledRow) -> Self {
        let f = &r.row;
        CsvRow {
            line_id: f.line_id.clone(),
            case_id: f.case_id.clone(),
            category: f.category.clone(),
            unique_code_count: f.unique_code_count,
            task_code: f.task_code.clone(),
            activity_code: f.activity_code.clone(),
            item_type: f.item_type,
            timekeeper_role: f.timekeeper_role,
            billing_mode: f.billing_mode,
            days_since_open: f.days_since_open,
            log_days_since_open: f.log_days_since_open,
            service_date: f.service_date,
            open_date: f.open_date,
            label: r.label,
            source_line_id: r.source_line_id.clone().unwrap_or_default(),
        }
    }
}

impl From<CsvRow> for LabeledRow {
    fn from(c: CsvRow) -> Self {
        LabeledRow {
            row: FeatureRow {
                line_id: c.line_id,
                case_id: c.case_id,
                category: c.category,
                unique_code_count: c.unique_code_count,
                task_code: c.task_code,
                activity_code: c.activity_code,
                item_type: c.item_type,
                timekeeper_role: c.timekeeper_role,
                billing_mode: c.billing_mode,
                days_since_open: c.days_since_open,
                log_days_since_open: c.log_days_since_open,
                service_date: c.service_date,
                open_date: c.open_date,
            },
            label: c.label,
            source_line_id: (!c.source_line_id.is_empty()).then_some(c.source_line_id),
        }
    }
}

/// Writes rows as CSV with a [`DATASET_COLUMNS`] header.
pub fn write_dataset_csv<W: Write>(rows: &[LabeledRow], out: W) -> Result<(), SynthError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(CsvRow::from(r))?;
    }
    if rows.is_empty() {
        w.write_record(DATASET_COLUMNS)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a dataset CSV; a missing column is reported by name.
pub fn read_dataset_csv<R: Read>(input: R) -> Result<Vec<LabeledRow>, SynthError> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let missing: Vec<&str> = DATASET_COLUMNS
        .iter()
        .copied()
        .filter(|c| !headers.iter().any(|h| h == *c))
        .collect();
    if !missing.is_empty() {
        return Err(SynthError::MissingColumns(missing.join(", ")));
    }
    r.deserialize::<CsvRow>()
        .map(|row| row.map(LabeledRow::from).map_err(SynthError::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub global_threshold: u64,
    pub params: InjectParams,
    pub summary: InjectionSummary,
    pub rows: usize,
    pub cases: usize,
}

impl DatasetManifest {
    pub fn new(ds: &LabeledDataset, global_threshold: u64, params: &InjectParams) -> Self {
        let cases: std::collections::BTreeSet<&str> =
            ds.rows.iter().map(|r| r.row.case_id.as_str()).collect();
        DatasetManifest {
            global_threshold,
            params: params.clone(),
            summary: ds.summary.clone(),
            rows: ds.rows.len(),
            cases: cases.len(),
        }
    }
}
