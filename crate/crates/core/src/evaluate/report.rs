use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::MetricsReport;
use super::EvalError;

pub const TABLE_METRICS: [&str; 5] = ["Precision", "Recall", "F1", "Accuracy", "Coverage"];

/// Metric rows by model columns, values in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub models: Vec<String>,
    /// `values[metric][model]`, in [`TABLE_METRICS`] order.
    pub values: Vec<Vec<f64>>,
}

impl ComparisonTable {
    pub fn from_reports(reports: &[(String, MetricsReport)]) -> Self {
        let pct = |f: fn(&MetricsReport) -> f64| -> Vec<f64> {
            reports.iter().map(|(_, r)| 100.0 * f(r)).collect()
        };
        ComparisonTable {
            models: reports.iter().map(|(m, _)| m.clone()).collect(),
            values: vec![
                pct(|r| r.precision),
                pct(|r| r.recall),
                pct(|r| r.f1),
                pct(|r| r.accuracy),
                pct(|r| r.coverage),
            ],
        }
    }

    pub fn get(&self, metric: &str, model: &str) -> Option<f64> {
        let r = TABLE_METRICS.iter().position(|m| *m == metric)?;
        let c = self.models.iter().position(|m| m == model)?;
        Some(self.values[r][c])
    }

    /// Aligned text table, percentages with two decimals.
    pub fn render(&self) -> String {
        let cells: Vec<Vec<String>> = self
            .values
            .iter()
            .map(|row| row.iter().map(|v| format!("{v:.2}")).collect())
            .collect();
        let label_w = TABLE_METRICS
            .iter()
            .map(|m| m.len())
            .chain(["Metric (%)".len()])
            .max()
            .unwrap_or(0);
        let col_w: Vec<usize> = self
            .models
            .iter()
            .enumerate()
            .map(|(c, m)| {
                cells
                    .iter()
                    .map(|r| r[c].len())
                    .chain([m.len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let _ = write!(out, "{:<label_w$}", "Metric (%)");
        for (m, w) in self.models.iter().zip(&col_w) {
            let _ = write!(out, "  {m:>w$}");
        }
        out.push('\n');
        for (name, row) in TABLE_METRICS.iter().zip(&cells) {
            let _ = write!(out, "{name:<label_w$}");
            for (v, w) in row.iter().zip(&col_w) {
                let _ = write!(out, "  {v:>w$}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let bad = |m: String| EvalError::TableFormat(m);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("empty table".into()))?;
        let models: Vec<String> = header
            .strip_prefix("Metric (%)")
            .ok_or_else(|| bad("missing 'Metric (%)' header".into()))?
            .split_whitespace()
            .map(String::from)
            .collect();
        let mut values = Vec::new();
        for metric in TABLE_METRICS {
            let line = lines
                .next()
                .ok_or_else(|| bad(format!("missing row '{metric}'")))?;
            let rest = line
                .strip_prefix(metric)
                .ok_or_else(|| bad(format!("expected row '{metric}', got '{line}'")))?;
            let row = rest
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| bad(format!("{metric}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if row.len() != models.len() {
                return Err(bad(format!(
                    "row '{metric}' has {} values for {} models",
                    row.len(),
                    models.len()
                )));
            }
            values.push(row);
        }
        Ok(ComparisonTable { models, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_shape() {
        let t = ComparisonTable {
            models: vec!["RF".into(), "SVM".into()],
            values: vec![vec![100.0, 5.0]; 5],
        };
        let text = t.render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], "Metric (%)      RF   SVM");
        assert_eq!(lines[1], "Precision   100.00  5.00");
        assert_eq!(ComparisonTable::parse(&text).unwrap(), t);
    }

    #[test]
    fn parse_rejects_malformed() {
        assert!(ComparisonTable::parse("").is_err());
        assert!(ComparisonTable::parse("Metric (%) RF\nPrecision 1.0\n").is_err());
    }
}
