use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::featurize::FeatureRow;
use crate::ingest::{ItemType, TimekeeperRole};

/// The categorical combination whose rarity defines a global anomaly.
/// Field order is the lexicographic sort order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ComboKey {
    pub case_category: String,
    pub item_type: ItemType,
    pub task_code: String,
    pub activity_code: String,
    pub timekeeper_role: TimekeeperRole,
}

impl ComboKey {
    pub fn of(row: &FeatureRow) -> Self {
        ComboKey {
            case_category: row.category.clone(),
            item_type: row.item_type,
            task_code: row.task_code.clone(),
            activity_code: row.activity_code.clone(),
            timekeeper_role: row.timekeeper_role,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboStats {
    pub count: u64,
    pub min_days: u32,
    pub sum_days: u64,
}

impl ComboStats {
    fn single(days: u32) -> Self {
        ComboStats {
            count: 1,
            min_days: days,
            sum_days: days as u64,
        }
    }

    fn merge(&mut self, other: &ComboStats) {
        self.count += other.count;
        self.min_days = self.min_days.min(other.min_days);
        self.sum_days += other.sum_days;
    }

    pub fn mean_days(&self) -> f64 {
        self.sum_days as f64 / self.count as f64
    }
}

/// Per-combination count and days-since-open minimum and mean.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LifecycleStats {
    pub combos: BTreeMap<ComboKey, ComboStats>,
}

impl LifecycleStats {
    pub fn get(&self, key: &ComboKey) -> Option<&ComboStats> {
        self.combos.get(key)
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }
}

fn fold_rows(rows: &[FeatureRow]) -> BTreeMap<ComboKey, ComboStats> {
    let mut m: BTreeMap<ComboKey, ComboStats> = BTreeMap::new();
    for r in rows {
        let s = ComboStats::single(r.days_since_open);
        m.entry(ComboKey::of(r))
            .and_modify(|e| e.merge(&s))
            .or_insert(s);
    }
    m
}

/// Counts are integer folds, so the chunked parallel merge is exact.
pub fn combo_counts(rows: &[FeatureRow]) -> LifecycleStats {
    let combos = rows
        .par_chunks(4096)
        .map(fold_rows)
        .reduce(BTreeMap::new, |mut a, b| {
            for (k, s) in b {
                a.entry(k).and_modify(|e| e.merge(&s)).or_insert(s);
            }
            a
        });
    LifecycleStats { combos }
}

/// Combinations occurring fewer than `threshold` times.
pub fn flag_global_anomalies(stats: &LifecycleStats, threshold: u64) -> BTreeSet<ComboKey> {
    stats
        .combos
        .iter()
        .filter(|(_, s)| s.count < threshold)
        .map(|(k, _)| k.clone())
        .collect()
}
