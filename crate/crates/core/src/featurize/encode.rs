use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::rows::FeatureRow;
use super::FeaturizeError;
use crate::matrix::Matrix;

/// Categorical inputs, in encoding order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CategoricalField {
    Category,
    TaskCode,
    ActivityCode,
    ItemType,
    BillingMode,
}

impl CategoricalField {
    pub const ALL: [CategoricalField; 5] = [
        CategoricalField::Category,
        CategoricalField::TaskCode,
        CategoricalField::ActivityCode,
        CategoricalField::ItemType,
        CategoricalField::BillingMode,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CategoricalField::Category => "category",
            CategoricalField::TaskCode => "task_code",
            CategoricalField::ActivityCode => "activity_code",
            CategoricalField::ItemType => "item_type",
            CategoricalField::BillingMode => "billing_mode",
        }
    }

    pub fn value(self, row: &FeatureRow) -> String {
        match self {
            CategoricalField::Category => row.category.clone(),
            CategoricalField::TaskCode => row.task_code.clone(),
            CategoricalField::ActivityCode => row.activity_code.clone(),
            CategoricalField::ItemType => row.item_type.to_string(),
            CategoricalField::BillingMode => row.billing_mode.to_string(),
        }
    }
}

pub const NUMERIC_FEATURES: [&str; 2] = ["unique_code_count", "log_days_since_open"];

fn numeric_values(row: &FeatureRow) -> [f64; 2] {
    [row.unique_code_count as f64, row.log_days_since_open]
}

/// Category lists per categorical field, frozen at training time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub fields: BTreeMap<String, Vec<String>>,
}

impl Vocabulary {
    pub fn from_rows(rows: &[FeatureRow]) -> Self {
        let fields = CategoricalField::ALL
            .iter()
            .map(|f| {
                let values: BTreeSet<String> = rows.iter().map(|r| f.value(r)).collect();
                (f.name().to_string(), values.into_iter().collect())
            })
            .collect();
        Vocabulary { fields }
    }

    pub fn values(&self, field: CategoricalField) -> &[String] {
        self.fields
            .get(field.name())
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// A contiguous block of encoded columns that belong to one input feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub start: usize,
    pub len: usize,
    pub numeric: bool,
}

impl FeatureGroup {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedMatrix {
    pub row_ids: Vec<String>,
    pub matrix: Matrix,
    pub columns: Vec<String>,
    pub groups: Vec<FeatureGroup>,
}

impl EncodedMatrix {
    pub fn column_dictionary(&self) -> BTreeMap<String, usize> {
        self.columns
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), i))
            .collect()
    }

    /// Per-column flag: true for pass-through numeric columns.
    pub fn numeric_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.columns.len()];
        for g in self.groups.iter().filter(|g| g.numeric) {
            mask[g.columns()].iter_mut().for_each(|m| *m = true);
        }
        mask
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["row_id".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header).expect("in-memory csv write");
        for (id, row) in self.row_ids.iter().zip(self.matrix.iter_rows()) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
    }
}

/// One-hot encodes categoricals and appends numeric columns.
///
/// Without `vocab` the vocabulary is learned from `rows`; with it, values outside
/// the vocabulary encode as an all-zero block.
pub fn encode(
    rows: &[FeatureRow],
    vocab: Option<&Vocabulary>,
) -> Result<(EncodedMatrix, Vocabulary), FeaturizeError> {
    if rows.is_empty() {
        return Err(FeaturizeError::EmptyRows);
    }
    let vocab = match vocab {
        Some(v) => v.clone(),
        None => Vocabulary::from_rows(rows),
    };

    let mut columns = Vec::new();
    let mut groups = Vec::new();
    let mut lookups: Vec<BTreeMap<&str, usize>> = Vec::new();
    for f in CategoricalField::ALL {
        let values = vocab.values(f);
        groups.push(FeatureGroup {
            name: f.name().to_string(),
            start: columns.len(),
            len: values.len(),
            numeric: false,
        });
        lookups.push(
            values
                .iter()
                .enumerate()
                .map(|(i, v)| (v.as_str(), columns.len() + i))
                .collect(),
        );
        columns.extend(values.iter().map(|v| format!("{}={v}", f.name())));
    }
    for name in NUMERIC_FEATURES {
        groups.push(FeatureGroup {
            name: name.to_string(),
            start: columns.len(),
            len: 1,
            numeric: true,
        });
        columns.push(name.to_string());
    }

    let d = columns.len();
    let numeric_start = d - NUMERIC_FEATURES.len();
    let mut m = Matrix::zeros(rows.len(), d);
    for (i, r) in rows.iter().enumerate() {
        let out = m.row_mut(i);
        for (f, lookup) in CategoricalField::ALL.iter().zip(&lookups) {
            if let Some(&c) = lookup.get(f.value(r).as_str()) {
                out[c] = 1.0;
            }
        }
        out[numeric_start..].copy_from_slice(&numeric_values(r));
    }

    Ok((
        EncodedMatrix {
            row_ids: rows.iter().map(|r| r.line_id.clone()).collect(),
            matrix: m,
            columns,
            groups,
        },
        vocab,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurize::rows::log_days;
    use crate::ingest::{ItemType, TimekeeperRole};
    use proptest::prelude::*;

    fn row(id: usize, task: &str, days: u32) -> FeatureRow {
        FeatureRow {
            line_id: format!("R{id}"),
            case_id: "C".into(),
            category: "Litigation".into(),
            unique_code_count: 7,
            task_code: task.into(),
            activity_code: "A101".into(),
            item_type: ItemType::Fee,
            timekeeper_role: TimekeeperRole::Partner,
            billing_mode: id % 2,
            days_since_open: days,
            log_days_since_open: log_days(days),
            service_date: "2020-01-01".parse().unwrap(),
            open_date: "2020-01-01".parse().unwrap(),
        }
    }

    fn vocab_with_tasks(tasks: &[&str]) -> Vocabulary {
        let mut v = Vocabulary::from_rows(&[row(0, "L110", 0)]);
        v.fields.insert(
            "task_code".into(),
            tasks.iter().map(|s| s.to_string()).collect(),
        );
        v
    }

    #[test]
    fn one_hot_block_for_known_and_unseen_values() {
        let vocab = vocab_with_tasks(&["L110", "L240"]);
        let (m, _) = encode(&[row(0, "L240", 74)], Some(&vocab)).unwrap();
        let dict = m.column_dictionary();
        let a = dict["task_code=L110"];
        let b = dict["task_code=L240"];
        assert_eq!((m.matrix.get(0, a), m.matrix.get(0, b)), (0.0, 1.0));
        let ld = m.matrix.get(0, dict["log_days_since_open"]);
        assert!((ld - 4.3175).abs() < 1e-4);

        let (m, _) = encode(&[row(0, "L999", 1)], Some(&vocab)).unwrap();
        assert_eq!((m.matrix.get(0, a), m.matrix.get(0, b)), (0.0, 0.0));
    }

    #[test]
    fn learned_vocab_is_sorted_and_groups_cover_columns() {
        let rows = vec![row(0, "L240", 1), row(1, "L110", 2), row(2, "L240", 3)];
        let (m, v) = encode(&rows, None).unwrap();
        assert_eq!(v.values(CategoricalField::TaskCode), ["L110", "L240"]);
        let covered: usize = m.groups.iter().map(|g| g.len).sum();
        assert_eq!(covered, m.columns.len());
        assert_eq!(m.numeric_mask().iter().filter(|&&b| b).count(), 2);
        for i in 0..rows.len() {
            for g in m.groups.iter().filter(|g| !g.numeric) {
                let ones: f64 = g.columns().map(|c| m.matrix.get(i, c)).sum();
                assert_eq!(ones, 1.0);
            }
        }
        assert!(m
            .to_csv()
            .starts_with("row_id,category=Litigation,task_code=L110"));
        assert!(encode(&[], None).is_err());
    }

    proptest! {
        #[test]
        fn subsetting_commutes_with_frozen_encoding(
            tasks in prop::collection::vec(0usize..5, 2..30),
            pick in prop::collection::vec(any::<prop::sample::Index>(), 1..10),
        ) {
            let names = ["L110", "L120", "L240", "L310", "L999"];
            let rows: Vec<_> = tasks.iter().enumerate().map(|(i, &t)| row(i, names[t], i as u32)).collect();
            let vocab = vocab_with_tasks(&["L110", "L240", "L310"]);
            let (full, _) = encode(&rows, Some(&vocab)).unwrap();
            let idx: Vec<usize> = pick.iter().map(|p| p.index(rows.len())).collect();
            let subset: Vec<_> = idx.iter().map(|&i| rows[i].clone()).collect();
            let (sub, _) = encode(&subset, Some(&vocab)).unwrap();
            prop_assert_eq!(sub.matrix, full.matrix.select_rows(&idx));
            prop_assert_eq!(sub.columns, full.columns);
        }
    }
}
