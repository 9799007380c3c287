use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Case, CaseHeader, Corpus, FileCounts, IngestError, IngestManifest, ParsedFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FlagKind {
    /// Kept in the corpus: `hours * rate` disagrees with `total` by more than 0.01.
    MathMismatch,
    /// Rejected: service date precedes the case open date.
    DateBeforeOpen,
}

impl fmt::Display for FlagKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FlagKind::MathMismatch => "MATH_MISMATCH",
            FlagKind::DateBeforeOpen => "DATE_BEFORE_OPEN",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationFlag {
    pub line_id: String,
    pub flag: FlagKind,
    pub detail: String,
}

/// Assembles the corpus from parsed files and the case manifest.
///
/// Cases keep manifest order and items keep file/line order. Items dated before
/// their case opened are rejected and reported; math mismatches are only flagged.
pub fn validate_items(
    files: &[ParsedFile],
    cases: &[CaseHeader],
    case_manifest: Option<&str>,
) -> Result<(Corpus, Vec<ValidationFlag>), IngestError> {
    let mut index: HashMap<&str, usize> = HashMap::with_capacity(cases.len());
    let mut built: Vec<Case> = Vec::with_capacity(cases.len());
    for (i, h) in cases.iter().enumerate() {
        if index.insert(h.case_id.as_str(), i).is_some() {
            return Err(IngestError::DuplicateCase(h.case_id.clone()));
        }
        built.push(Case {
            case_id: h.case_id.clone(),
            category: h.category.clone(),
            open_date: h.open_date,
            items: Vec::new(),
        });
    }

    let mut seen: HashSet<&str> = HashSet::new();
    let mut flags = Vec::new();
    let mut counts = Vec::with_capacity(files.len());
    for file in files {
        let mut accepted = 0;
        let mut rejected = 0;
        for rec in &file.records {
            let item = &rec.item;
            if !seen.insert(item.line_id.as_str()) {
                return Err(IngestError::DuplicateLineId(item.line_id.clone()));
            }
            let &ci = index
                .get(item.case_id.as_str())
                .ok_or_else(|| IngestError::UnknownCase {
                    line_id: item.line_id.clone(),
                    case_id: item.case_id.clone(),
                })?;
            let case = &mut built[ci];
            if item.service_date < case.open_date {
                rejected += 1;
                flags.push(ValidationFlag {
                    line_id: item.line_id.clone(),
                    flag: FlagKind::DateBeforeOpen,
                    detail: format!(
                        "service_date {} precedes open_date {}",
                        item.service_date, case.open_date
                    ),
                });
                continue;
            }
            if item.has_math_mismatch() {
                flags.push(ValidationFlag {
                    line_id: item.line_id.clone(),
                    flag: FlagKind::MathMismatch,
                    detail: format!("{} x {} != {}", item.hours, item.rate, item.total),
                });
            }
            accepted += 1;
            case.items.push(item.clone());
        }
        counts.push(FileCounts {
            path: file.path.clone(),
            records: file.records.len(),
            accepted,
            rejected,
        });
    }

    Ok((
        Corpus {
            cases: built,
            ingest_manifest: IngestManifest {
                case_manifest: case_manifest.map(str::to_string),
                files: counts,
            },
        },
        flags,
    ))
}

pub fn write_validation_report(flags: &[ValidationFlag]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["line_id", "flag", "detail"])
        .expect("in-memory csv write");
    for f in flags {
        w.write_record([f.line_id.as_str(), &f.flag.to_string(), f.detail.as_str()])
            .expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
}

pub fn write_corpus_json(corpus: &Corpus, path: &Path) -> Result<(), IngestError> {
    let text = serde_json::to_string_pretty(corpus)?;
    fs::write(path, text).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_corpus_json(path: &Path) -> Result<Corpus, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}
