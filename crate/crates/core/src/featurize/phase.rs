use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::FeaturizeError;
use crate::ingest::{Case, ItemType, LineItem};

/// Billing bucket derived from a line-item's UTBMS code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PhaseBucket {
    L100,
    L200,
    L300,
    L400,
    L500,
    E100,
    E200,
    Other,
}

impl PhaseBucket {
    pub const ALL: [PhaseBucket; 8] = [
        PhaseBucket::L100,
        PhaseBucket::L200,
        PhaseBucket::L300,
        PhaseBucket::L400,
        PhaseBucket::L500,
        PhaseBucket::E100,
        PhaseBucket::E200,
        PhaseBucket::Other,
    ];

    /// Number of litigation task phases (L100 through L500).
    pub const LITIGATION_PHASES: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PhaseBucket::L100 => "L100",
            PhaseBucket::L200 => "L200",
            PhaseBucket::L300 => "L300",
            PhaseBucket::L400 => "L400",
            PhaseBucket::L500 => "L500",
            PhaseBucket::E100 => "E100",
            PhaseBucket::E200 => "E200",
            PhaseBucket::Other => "OTHER",
        }
    }

    pub fn is_litigation_phase(self) -> bool {
        self.index() < Self::LITIGATION_PHASES
    }

    /// Litigation phase of a task code (`L1xx` -> `L100`, ...).
    pub fn of_task_code(code: &str) -> Option<PhaseBucket> {
        let b = code.as_bytes();
        if b.len() < 2 || b[0] != b'L' {
            return None;
        }
        match b[1] {
            b'1' => Some(PhaseBucket::L100),
            b'2' => Some(PhaseBucket::L200),
            b'3' => Some(PhaseBucket::L300),
            b'4' => Some(PhaseBucket::L400),
            b'5' => Some(PhaseBucket::L500),
            _ => None,
        }
    }

    pub fn of_item(item: &LineItem) -> PhaseBucket {
        match item.item_type {
            ItemType::Fee => Self::of_task_code(&item.task_code).unwrap_or(PhaseBucket::Other),
            ItemType::Expense => {
                let b = item.expense_code.as_bytes();
                match (b.first(), b.get(1)) {
                    (Some(b'E'), Some(b'1')) => PhaseBucket::E100,
                    (Some(b'E'), Some(b'2')) => PhaseBucket::E200,
                    _ => PhaseBucket::Other,
                }
            }
        }
    }
}

/// Fraction of a case's billed total falling into each [`PhaseBucket`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDistribution {
    pub case_id: String,
    pub fractions: [f64; 8],
}

impl PhaseDistribution {
    pub fn get(&self, bucket: PhaseBucket) -> f64 {
        self.fractions[bucket.index()]
    }
}

pub fn phase_distribution(case: &Case) -> Result<PhaseDistribution, FeaturizeError> {
    let mut sums = [0i64; 8];
    for it in &case.items {
        sums[PhaseBucket::of_item(it).index()] += it.total.hundredths();
    }
    let total: i64 = sums.iter().sum();
    if total <= 0 {
        return Err(FeaturizeError::ZeroBilledTotal(case.case_id.clone()));
    }
    let mut fractions = [0.0; 8];
    for (f, s) in fractions.iter_mut().zip(sums) {
        *f = s as f64 / total as f64;
    }
    Ok(PhaseDistribution {
        case_id: case.case_id.clone(),
        fractions,
    })
}

/// Distinct non-empty task codes billed on the case.
pub fn unique_code_count(case: &Case) -> u32 {
    case.items
        .iter()
        .filter(|i| !i.task_code.is_empty())
        .map(|i| i.task_code.as_str())
        .collect::<BTreeSet<_>>()
        .len() as u32
}

/// Distinct litigation phases (L100..L500) reached by the case's task codes.
pub fn litigation_phases_used(case: &Case) -> usize {
    case.items
        .iter()
        .filter_map(|i| PhaseBucket::of_task_code(&i.task_code))
        .collect::<BTreeSet<_>>()
        .len()
}
