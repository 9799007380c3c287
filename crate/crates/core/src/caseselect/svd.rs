//! Truncated SVD of the column-centered phase matrix via one-sided Jacobi rotations.

use serde::{Deserialize, Serialize};

use super::SelectError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedMatrix {
    pub case_ids: Vec<String>,
    /// N x k projections onto the leading right singular vectors.
    pub scores: Matrix,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    /// Ratio for each kept component.
    pub explained_variance_ratio: Vec<f64>,
}

impl ReducedMatrix {
    pub fn components(&self) -> usize {
        self.scores.cols()
    }

    pub fn cumulative_explained(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }
}

/// Full decomposition `centered = scores * vᵀ` with `scores = U Σ`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub scores: Matrix,
    pub singular_values: Vec<f64>,
    /// p x p, columns are right singular vectors.
    pub right_vectors: Matrix,
}

pub fn center_columns(m: &Matrix) -> Matrix {
    let n = m.rows() as f64;
    let means: Vec<f64> = (0..m.cols())
        .map(|j| m.iter_rows().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let mut out = m.clone();
    for i in 0..m.rows() {
        for (v, mu) in out.row_mut(i).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    out
}

/// One-sided Jacobi SVD. Components are ordered by decreasing singular value and
/// each right vector's largest-magnitude entry is made positive.
pub fn decompose(a: &Matrix) -> Decomposition {
    let (n, p) = (a.rows(), a.cols());
    // work column-major
    let mut cols: Vec<Vec<f64>> = (0..p).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|j| (0..p).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    for _sweep in 0..100 {
        let mut rotated = false;
        for j in 0..p {
            for k in j + 1..p {
                let alpha: f64 = cols[j].iter().map(|x| x * x).sum();
                let beta: f64 = cols[k].iter().map(|x| x * x).sum();
                let gamma: f64 = cols[j].iter().zip(&cols[k]).map(|(x, y)| x * y).sum();
                if gamma == 0.0 || gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(k);
                for (x, y) in lo[j].iter_mut().zip(hi[0].iter_mut()) {
                    let (xj, xk) = (*x, *y);
                    *x = c * xj - s * xk;
                    *y = s * xj + c * xk;
                }
                let (lo, hi) = v.split_at_mut(k);
                for (x, y) in lo[j].iter_mut().zip(hi[0].iter_mut()) {
                    let (xj, xk) = (*x, *y);
                    *x = c * xj - s * xk;
                    *y = s * xj + c * xk;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let sigma: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&x, &y| sigma[y].total_cmp(&sigma[x]).then(x.cmp(&y)));

    let mut scores = Matrix::zeros(n, p);
    let mut right = Matrix::zeros(p, p);
    let mut singular_values = Vec::with_capacity(p);
    for (out_j, &j) in order.iter().enumerate() {
        let mut pivot = 0;
        for i in 1..p {
            if v[j][i].abs() > v[j][pivot].abs() {
                pivot = i;
            }
        }
        let sign = if v[j][pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            scores.set(i, out_j, sign * cols[j][i]);
        }
        for i in 0..p {
            right.set(i, out_j, sign * v[j][i]);
        }
        singular_values.push(sigma[j]);
    }
    Decomposition {
        scores,
        singular_values,
        right_vectors: right,
    }
}

/// Keeps the fewest leading components whose cumulative explained variance
/// reaches `variance_target`.
pub fn svd_reduce(
    case_ids: Vec<String>,
    matrix: &Matrix,
    variance_target: f64,
) -> Result<ReducedMatrix, SelectError> {
    if matrix.rows() < 2 {
        return Err(SelectError::TooFewRows(matrix.rows()));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(SelectError::InvalidParameter(format!(
            "variance target {variance_target} outside (0, 1]"
        )));
    }
    let centered = center_columns(matrix);
    let raw_ss: f64 = matrix.data().iter().map(|x| x * x).sum();
    let ss: f64 = centered.data().iter().map(|x| x * x).sum();
    if ss <= 1e-24 * (1.0 + raw_ss) {
        return Err(SelectError::ZeroVariance);
    }
    let dec = decompose(&centered);
    let total: f64 = dec.singular_values.iter().map(|s| s * s).sum();
    let ratios: Vec<f64> = dec.singular_values.iter().map(|s| s * s / total).collect();
    let mut k = 0;
    let mut cum = 0.0;
    while k < ratios.len() {
        cum += ratios[k];
        k += 1;
        if cum >= variance_target - 1e-12 {
            break;
        }
    }
    let keep: Vec<usize> = (0..k).collect();
    let mut scores = Matrix::zeros(matrix.rows(), k);
    for i in 0..matrix.rows() {
        for &j in &keep {
            scores.set(i, j, dec.scores.get(i, j));
        }
    }
    Ok(ReducedMatrix {
        case_ids,
        scores,
        singular_values: dec.singular_values,
        explained_variance_ratio: ratios[..k].to_vec(),
    })
}
