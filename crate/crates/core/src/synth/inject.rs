use std::collections::BTreeSet;

use chrono::Days;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::combos::{ComboKey, LifecycleStats};
use super::SynthError;
use crate::featurize::{log_days, FeatureRow};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectParams {
    pub target_fraction: f64,
    /// Combos first seen earlier than this many days are never injected.
    pub min_days_floor: u32,
    /// Injected days are drawn from `[0, beta * min_days)`.
    pub beta: f64,
    pub seed: u64,
}

impl Default for InjectParams {
    fn default() -> Self {
        InjectParams {
            target_fraction: 0.05,
            min_days_floor: 60,
            beta: 0.25,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub row: FeatureRow,
    /// 1 for injected lifecycle anomalies.
    pub label: u8,
    /// Line the anomaly was copied from; `None` for original rows.
    pub source_line_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionSummary {
    pub normal_rows: usize,
    pub injected_rows: usize,
    pub eligible_combos: usize,
    pub eligible_rows: usize,
    pub global_combos: usize,
    pub realized_fraction: f64,
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub rows: Vec<LabeledRow>,
    pub summary: InjectionSummary,
}

impl LabeledDataset {
    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn feature_rows(&self) -> Vec<FeatureRow> {
        self.rows.iter().map(|r| r.row.clone()).collect()
    }
}

/// `round(u * beta * min_days)`, never negative.
pub fn injected_days(min_days: u32, beta: f64, u: f64) -> u32 {
    (u * beta * min_days as f64).round().max(0.0) as u32
}

/// Appends copies of eligible rows moved far earlier in their case than their
/// combination has ever been observed, until the anomalous share reaches
/// `target_fraction`.
pub fn inject_anomalies(
    rows: Vec<FeatureRow>,
    stats: &LifecycleStats,
    globals: &BTreeSet<ComboKey>,
    params: &InjectParams,
) -> Result<LabeledDataset, SynthError> {
    let f = params.target_fraction;
    if !(f > 0.0 && f < 0.5) {
        return Err(SynthError::InvalidParameter(format!(
            "target_fraction {f} outside (0, 0.5)"
        )));
    }
    if !(params.beta > 0.0 && params.beta.is_finite()) {
        return Err(SynthError::InvalidParameter(format!(
            "beta {} must be positive",
            params.beta
        )));
    }

    let mut eligible_combos = BTreeSet::new();
    let eligible: Vec<(usize, u32)> = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| {
            let key = ComboKey::of(r);
            if globals.contains(&key) {
                return None;
            }
            let s = stats.get(&key)?;
            if s.min_days < params.min_days_floor {
                return None;
            }
            eligible_combos.insert(key);
            Some((i, s.min_days))
        })
        .collect();
    if eligible.is_empty() {
        return Err(SynthError::NoEligibleCombos {
            floor: params.min_days_floor,
        });
    }

    let normal = rows.len();
    let needed = ((f * normal as f64) / (1.0 - f)).ceil().max(1.0) as usize;
    let budget = needed.saturating_mul(10).max(10);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut injected: Vec<LabeledRow> = Vec::with_capacity(needed);
    let mut draws = 0usize;
    while (injected.len() as f64) < f * (injected.len() + normal) as f64 {
        if draws >= budget {
            return Err(SynthError::TargetUnreachable {
                target: f,
                injected: injected.len(),
                draws,
            });
        }
        draws += 1;
        let (src, min_days) = eligible[rng.gen_range(0..eligible.len())];
        let u: f64 = rng.gen();
        let days = injected_days(min_days, params.beta, u);
        if days >= min_days {
            continue;
        }
        let source = &rows[src];
        let mut row = source.clone();
        row.line_id = format!("{}~syn{}", source.line_id, injected.len());
        row.days_since_open = days;
        row.log_days_since_open = log_days(days);
        row.service_date = source.open_date + Days::new(days as u64);
        injected.push(LabeledRow {
            row,
            label: 1,
            source_line_id: Some(source.line_id.clone()),
        });
    }

    let n_injected = injected.len();
    let mut out: Vec<LabeledRow> = rows
        .into_iter()
        .map(|row| LabeledRow {
            row,
            label: 0,
            source_line_id: None,
        })
        .collect();
    out.extend(injected);
    Ok(LabeledDataset {
        summary: InjectionSummary {
            normal_rows: normal,
            injected_rows: n_injected,
            eligible_combos: eligible_combos.len(),
            eligible_rows: eligible.len(),
            global_combos: globals.len(),
            realized_fraction: n_injected as f64 / out.len() as f64,
            draws,
        },
        rows: out,
    })
}
