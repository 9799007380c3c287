use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;

use super::{CaseHeader, Decimal2, IngestError, ItemType, LineItem, TimekeeperRole};

/// Column order of the invoice line-item format.
pub const INVOICE_FIELDS: [&str; 14] = [
    "line_id",
    "invoice_id",
    "case_id",
    "service_date",
    "item_type",
    "task_code",
    "activity_code",
    "expense_code",
    "timekeeper_id",
    "timekeeper_role",
    "hours",
    "rate",
    "total",
    "description",
];

pub const CASE_MANIFEST_HEADER: [&str; 3] = ["case_id", "category", "open_date"];

/// A parsed line together with its 1-based position in the source file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineRecord {
    pub line_number: usize,
    pub item: LineItem,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFile {
    pub path: String,
    pub records: Vec<LineRecord>,
}

fn read_text(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn parse_invoice_file(path: &Path) -> Result<ParsedFile, IngestError> {
    let text = read_text(path)?;
    let name = path.display().to_string();
    let records = parse_invoice_str(&name, &text)?;
    Ok(ParsedFile {
        path: name,
        records,
    })
}

/// Parses several files concurrently; output order follows `paths`.
pub fn parse_invoice_files<P: AsRef<Path> + Sync>(
    paths: &[P],
) -> Result<Vec<ParsedFile>, IngestError> {
    paths
        .par_iter()
        .map(|p| parse_invoice_file(p.as_ref()))
        .collect()
}

fn check_header(source: &str, header: Option<&str>, expected: &[&str]) -> Result<(), IngestError> {
    let header = header.ok_or_else(|| IngestError::Header {
        path: source.to_string(),
        detail: "file is empty".into(),
    })?;
    let names: Vec<&str> = header.split('|').map(str::trim).collect();
    if names != expected {
        let missing: Vec<&str> = expected
            .iter()
            .copied()
            .filter(|f| !names.contains(f))
            .collect();
        let detail = if missing.is_empty() {
            format!("expected '{}'", expected.join("|"))
        } else {
            format!("missing fields: {}", missing.join(", "))
        };
        return Err(IngestError::Header {
            path: source.to_string(),
            detail,
        });
    }
    Ok(())
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn is_task_code(code: &str) -> bool {
    let b = code.as_bytes();
    b.len() == 4 && b[0].is_ascii_alphabetic() && b[1..].iter().all(u8::is_ascii_digit)
}

struct LineContext<'a> {
    source: &'a str,
    line: usize,
}

impl LineContext<'_> {
    fn field_error(&self, column: &'static str, value: &str, reason: impl ToString) -> IngestError {
        IngestError::Field {
            path: self.source.to_string(),
            line: self.line,
            column,
            value: value.to_string(),
            reason: reason.to_string(),
        }
    }

    fn date(&self, column: &'static str, value: &str) -> Result<NaiveDate, IngestError> {
        NaiveDate::parse_from_str(value, "%Y-%m-%d").map_err(|e| self.field_error(column, value, e))
    }

    fn decimal(&self, column: &'static str, value: &str) -> Result<Decimal2, IngestError> {
        value
            .parse::<Decimal2>()
            .map_err(|e| self.field_error(column, value, e))
    }
}

/// Parses invoice text; `source` labels errors.
pub fn parse_invoice_str(source: &str, text: &str) -> Result<Vec<LineRecord>, IngestError> {
    let mut lines = content_lines(text);
    check_header(source, lines.next().map(|(_, l)| l), &INVOICE_FIELDS)?;

    let mut out = Vec::new();
    for (line, raw) in lines {
        let f: Vec<&str> = raw.split('|').map(str::trim).collect();
        if f.len() != INVOICE_FIELDS.len() {
            return Err(IngestError::FieldCount {
                path: source.to_string(),
                line,
                expected: INVOICE_FIELDS.len(),
                found: f.len(),
            });
        }
        let ctx = LineContext { source, line };
        let item_type: ItemType = f[4]
            .parse()
            .map_err(|e: String| ctx.field_error("item_type", f[4], e))?;
        let timekeeper_role: TimekeeperRole = f[9]
            .parse()
            .map_err(|e: String| ctx.field_error("timekeeper_role", f[9], e))?;
        if !f[5].is_empty() && !is_task_code(f[5]) {
            return Err(ctx.field_error(
                "task_code",
                f[5],
                "expected a letter followed by 3 digits",
            ));
        }
        if f[0].is_empty() {
            return Err(ctx.field_error("line_id", f[0], "must not be empty"));
        }
        if f[2].is_empty() {
            return Err(ctx.field_error("case_id", f[2], "must not be empty"));
        }
        let mut activity_code = f[6].to_string();
        let mut expense_code = f[7].to_string();
        // Expense rows sometimes carry their E-code in the activity column.
        if item_type == ItemType::Expense
            && expense_code.is_empty()
            && activity_code.starts_with('E')
        {
            expense_code = std::mem::take(&mut activity_code);
        }
        out.push(LineRecord {
            line_number: line,
            item: LineItem {
                line_id: f[0].to_string(),
                invoice_id: f[1].to_string(),
                case_id: f[2].to_string(),
                service_date: ctx.date("service_date", f[3])?,
                item_type,
                task_code: f[5].to_string(),
                activity_code,
                expense_code,
                timekeeper_id: f[8].to_string(),
                timekeeper_role,
                hours: ctx.decimal("hours", f[10])?,
                rate: ctx.decimal("rate", f[11])?,
                total: ctx.decimal("total", f[12])?,
                description: f[13].to_string(),
            },
        });
    }
    Ok(out)
}

pub fn parse_case_manifest(path: &Path) -> Result<Vec<CaseHeader>, IngestError> {
    let text = read_text(path)?;
    parse_case_manifest_str(&path.display().to_string(), &text)
}

pub fn parse_case_manifest_str(source: &str, text: &str) -> Result<Vec<CaseHeader>, IngestError> {
    let mut lines = content_lines(text);
    check_header(source, lines.next().map(|(_, l)| l), &CASE_MANIFEST_HEADER)?;
    let mut out = Vec::new();
    for (line, raw) in lines {
        let f: Vec<&str> = raw.split('|').map(str::trim).collect();
        if f.len() != CASE_MANIFEST_HEADER.len() {
            return Err(IngestError::FieldCount {
                path: source.to_string(),
                line,
                expected: CASE_MANIFEST_HEADER.len(),
                found: f.len(),
            });
        }
        let ctx = LineContext { source, line };
        if f[0].is_empty() {
            return Err(ctx.field_error("case_id", f[0], "must not be empty"));
        }
        out.push(CaseHeader {
            case_id: f[0].to_string(),
            category: f[1].to_string(),
            open_date: ctx.date("open_date", f[2])?,
        });
    }
    Ok(out)
}

/// Renders items in the invoice format, header included.
pub fn write_invoice_rows<'a>(items: impl IntoIterator<Item = &'a LineItem>) -> String {
    let mut out = INVOICE_FIELDS.join("|");
    out.push('\n');
    for it in items {
        let _ = writeln!(
            out,
            "{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}|{}",
            it.line_id,
            it.invoice_id,
            it.case_id,
            it.service_date.format("%Y-%m-%d"),
            it.item_type,
            it.task_code,
            it.activity_code,
            it.expense_code,
            it.timekeeper_id,
            it.timekeeper_role,
            it.hours,
            it.rate,
            it.total,
            it.description
        );
    }
    out
}

pub fn write_case_manifest<'a>(cases: impl IntoIterator<Item = &'a CaseHeader>) -> String {
    let mut out = CASE_MANIFEST_HEADER.join("|");
    out.push('\n');
    for c in cases {
        let _ = writeln!(
            out,
            "{}|{}|{}",
            c.case_id,
            c.category,
            c.open_date.format("%Y-%m-%d")
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn with_header(body: &str) -> String {
        format!("{}\n{body}", INVOICE_FIELDS.join("|"))
    }

    #[test]
    fn parses_fee_line() {
        let text = with_header("LN1|INV001|CASE42|2020-03-15|FEE|L240|A103||TK07|ASSOCIATE|2.5|350.00|875.00|Draft motion\n");
        let recs = parse_invoice_str("f", &text).unwrap();
        assert_eq!(recs.len(), 1);
        let it = &recs[0].item;
        assert_eq!(recs[0].line_number, 2);
        assert_eq!(it.item_type, ItemType::Fee);
        assert_eq!(it.hours, "2.5".parse().unwrap());
        assert_eq!(it.rate, "350.00".parse().unwrap());
        assert_eq!(it.total, "875.00".parse().unwrap());
        assert_eq!(it.task_code, "L240");
        assert_eq!(it.activity_code, "A103");
        assert_eq!(it.expense_code, "");
        assert_eq!(it.description, "Draft motion");
    }

    #[test]
    fn parses_expense_line() {
        let text = with_header(
            "LN2|INV001|CASE42|2020-03-15|EXPENSE||E101||TK07|OTHER|0|0|42.10|Copies\n",
        );
        let it = parse_invoice_str("f", &text).unwrap().remove(0).item;
        assert_eq!(it.item_type, ItemType::Expense);
        assert_eq!(it.expense_code, "E101");
        assert_eq!(it.activity_code, "");
        assert_eq!(it.total, "42.10".parse().unwrap());

        let canonical = with_header(
            "LN2|INV001|CASE42|2020-03-15|EXPENSE|||E101|TK07|OTHER|0|0|42.10|Copies\n",
        );
        assert_eq!(parse_invoice_str("f", &canonical).unwrap()[0].item, it);
    }

    #[test]
    fn wrong_field_count_names_line() {
        let text = with_header(
            "LN1|INV001|CASE42|2020-03-15|FEE|L240|A103||TK07|ASSOCIATE|2.5|350.00|875.00|ok\n\
             LN3|INV001|CASE42|2020-03-15|FEE|L240|A103||TK07|ASSOCIATE|2.5|350.00|875.00\n",
        );
        match parse_invoice_str("f", &text) {
            Err(IngestError::FieldCount { line, found, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(found, 13);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_values_name_column() {
        let text = with_header("LN1|I|C|2020-02-30|FEE|L240|A103||TK|PARTNER|1|1|1|x\n");
        match parse_invoice_str("f", &text) {
            Err(IngestError::Field { line, column, .. }) => {
                assert_eq!((line, column), (2, "service_date"))
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = with_header("LN1|I|C|2020-02-03|FEE|L240|A103||TK|PARTNER|1|abc|1|x\n");
        match parse_invoice_str("f", &text) {
            Err(IngestError::Field { column, .. }) => assert_eq!(column, "rate"),
            other => panic!("unexpected {other:?}"),
        }
        let text = with_header("LN1|I|C|2020-02-03|FEE|L24|A103||TK|PARTNER|1|1|1|x\n");
        assert!(matches!(
            parse_invoice_str("f", &text),
            Err(IngestError::Field {
                column: "task_code",
                ..
            })
        ));
    }

    #[test]
    fn header_must_match() {
        let err = parse_invoice_str("f", "line_id|invoice_id\n").unwrap_err();
        assert!(err.to_string().contains("missing fields"), "{err}");
        assert!(parse_invoice_str("f", "").is_err());
    }

    #[test]
    fn case_manifest_round_trip() {
        let text = "case_id|category|open_date\nC1|Litigation|2020-01-01\nC2|IP|2019-05-06\n";
        let cases = parse_case_manifest_str("m", text).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(write_case_manifest(&cases), text);
    }
}
