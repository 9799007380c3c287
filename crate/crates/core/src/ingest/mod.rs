//! Invoice ingestion: pipe-delimited line-item files plus a case manifest,
//! validated into a [`Corpus`].

mod decimal;
mod parse;
mod validate;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decimal::{Decimal2, DecimalParseError};
pub use parse::{
    parse_case_manifest, parse_case_manifest_str, parse_invoice_file, parse_invoice_files,
    parse_invoice_str, write_case_manifest, write_invoice_rows, LineRecord, ParsedFile,
    CASE_MANIFEST_HEADER, INVOICE_FIELDS,
};
pub use validate::{
    read_corpus_json, validate_items, write_corpus_json, write_validation_report, FlagKind,
    ValidationFlag,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: bad header: {detail}")]
    Header { path: String, detail: String },
    #[error("{path}:{line}: expected {expected} fields, found {found}")]
    FieldCount {
        path: String,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: column '{column}': {reason} (value '{value}')")]
    Field {
        path: String,
        line: usize,
        column: &'static str,
        value: String,
        reason: String,
    },
    #[error("duplicate line_id '{0}'")]
    DuplicateLineId(String),
    #[error("duplicate case_id '{0}' in case manifest")]
    DuplicateCase(String),
    #[error("line '{line_id}' references unknown case '{case_id}'")]
    UnknownCase { line_id: String, case_id: String },
    #[error("line '{line_id}' is dated {service_date}, before case open date {open_date}")]
    DateBeforeOpen {
        line_id: String,
        service_date: NaiveDate,
        open_date: NaiveDate,
    },
    #[error("corpus json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ItemType {
    Fee,
    Expense,
}

impl ItemType {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemType::Fee => "FEE",
            ItemType::Expense => "EXPENSE",
        }
    }
}

impl FromStr for ItemType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "FEE" => Ok(ItemType::Fee),
            "EXPENSE" => Ok(ItemType::Expense),
            _ => Err("expected FEE or EXPENSE".into()),
        }
    }
}

impl fmt::Display for ItemType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TimekeeperRole {
    Partner,
    Associate,
    Paralegal,
    Other,
}

impl TimekeeperRole {
    pub const ALL: [TimekeeperRole; 4] = [
        TimekeeperRole::Partner,
        TimekeeperRole::Associate,
        TimekeeperRole::Paralegal,
        TimekeeperRole::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TimekeeperRole::Partner => "PARTNER",
            TimekeeperRole::Associate => "ASSOCIATE",
            TimekeeperRole::Paralegal => "PARALEGAL",
            TimekeeperRole::Other => "OTHER",
        }
    }
}

impl FromStr for TimekeeperRole {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PARTNER" => Ok(TimekeeperRole::Partner),
            "ASSOCIATE" => Ok(TimekeeperRole::Associate),
            "PARALEGAL" => Ok(TimekeeperRole::Paralegal),
            "OTHER" => Ok(TimekeeperRole::Other),
            _ => Err("expected PARTNER, ASSOCIATE, PARALEGAL or OTHER".into()),
        }
    }
}

impl fmt::Display for TimekeeperRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One billed fee or expense row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineItem {
    pub line_id: String,
    pub invoice_id: String,
    pub case_id: String,
    pub service_date: NaiveDate,
    pub item_type: ItemType,
    pub task_code: String,
    pub activity_code: String,
    pub expense_code: String,
    pub timekeeper_id: String,
    pub timekeeper_role: TimekeeperRole,
    pub hours: Decimal2,
    pub rate: Decimal2,
    pub total: Decimal2,
    pub description: String,
}

impl LineItem {
    /// True when a fee with hours has `|hours * rate - total| > 0.01`.
    pub fn has_math_mismatch(&self) -> bool {
        self.item_type == ItemType::Fee
            && !self.hours.is_zero()
            && self.hours.product_gap(self.rate, self.total) > 100
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseHeader {
    pub case_id: String,
    pub category: String,
    pub open_date: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Case {
    pub case_id: String,
    pub category: String,
    pub open_date: NaiveDate,
    pub items: Vec<LineItem>,
}

impl Case {
    pub fn header(&self) -> CaseHeader {
        CaseHeader {
            case_id: self.case_id.clone(),
            category: self.category.clone(),
            open_date: self.open_date,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileCounts {
    pub path: String,
    pub records: usize,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub case_manifest: Option<String>,
    pub files: Vec<FileCounts>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub cases: Vec<Case>,
    pub ingest_manifest: IngestManifest,
}

impl Corpus {
    pub fn item_count(&self) -> usize {
        self.cases.iter().map(|c| c.items.len()).sum()
    }

    pub fn case(&self, case_id: &str) -> Option<&Case> {
        self.cases.iter().find(|c| c.case_id == case_id)
    }
}

/// Whole days from the case open date to the item's service date.
pub fn days_since_open(item: &LineItem, case: &Case) -> Result<u32, IngestError> {
    let days = (item.service_date - case.open_date).num_days();
    u32::try_from(days).map_err(|_| IngestError::DateBeforeOpen {
        line_id: item.line_id.clone(),
        service_date: item.service_date,
        open_date: case.open_date,
    })
}
