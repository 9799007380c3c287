use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::EvalError;

/// Row indices of the three chronological blocks, each in time order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub fit: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Indices sorted by key; equal keys keep row order.
pub fn chronological_order(keys: &[NaiveDate]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by_key(|&i| keys[i]);
    idx
}

/// Contiguous train / test / validation blocks over the time-sorted rows.
/// Block sizes are `floor(f * N)` for train and test; validation takes the rest.
pub fn chronological_split(
    keys: &[NaiveDate],
    fractions: [f64; 3],
) -> Result<SplitSpec, EvalError> {
    let n = keys.len();
    if n < 5 {
        return Err(EvalError::TooFewRows(n));
    }
    let sum: f64 = fractions.iter().sum();
    if fractions.iter().any(|&f| !(f > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(EvalError::InvalidParameter(format!(
            "split fractions {fractions:?} must be positive and sum to 1"
        )));
    }
    let order = chronological_order(keys);
    let n_train = (fractions[0] * n as f64 + 1e-9).floor() as usize;
    let n_test = (fractions[1] * n as f64 + 1e-9).floor() as usize;
    if n_train == 0 || n_test == 0 || n_train + n_test >= n {
        return Err(EvalError::TooFewRows(n));
    }
    Ok(SplitSpec {
        train: order[..n_train].to_vec(),
        test: order[n_train..n_train + n_test].to_vec(),
        validation: order[n_train + n_test..].to_vec(),
    })
}

/// Expanding-window folds: `rows` (already in time order) is cut into
/// `n_folds + 1` segments and fold `i` fits on segments `0..=i` and evaluates
/// on segment `i + 1`.
pub fn ts_cv_folds(rows: &[usize], n_folds: usize) -> Result<Vec<Fold>, EvalError> {
    if n_folds < 2 {
        return Err(EvalError::InvalidParameter(format!(
            "n_folds = {n_folds}, need at least 2"
        )));
    }
    let segments = n_folds + 1;
    let n = rows.len();
    if n < segments {
        return Err(EvalError::EmptySegment { rows: n, segments });
    }
    let bound = |k: usize| k * n / segments;
    Ok((1..segments)
        .map(|k| Fold {
            fit: rows[..bound(k)].to_vec(),
            eval: rows[bound(k)..bound(k + 1)].to_vec(),
        })
        .collect())
}
