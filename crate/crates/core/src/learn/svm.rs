use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, LearnError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmParams {
    pub kernel: Kernel,
    pub c: f64,
    /// Multiplies `c` for anomalous rows.
    pub class_weight: f64,
    pub tolerance: f64,
    /// SMO iteration budget; `None` means `max(10_000, 200 * n)`.
    pub max_iterations: Option<usize>,
    /// Rows beyond this are stratified-subsampled before training.
    pub max_train_rows: usize,
    pub platt_folds: usize,
    /// Full kernel matrices are cached up to this many rows.
    pub kernel_cache_rows: usize,
    pub seed: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            kernel: Kernel::Rbf { gamma: 0.1 },
            c: 1.0,
            class_weight: 1.0,
            tolerance: 1e-3,
            max_iterations: None,
            max_train_rows: 2500,
            platt_folds: 3,
            kernel_cache_rows: 8000,
            seed: 0,
        }
    }
}

/// Train-set mean and population sd of the numeric columns; other columns
/// pass through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix, numeric: &[bool]) -> Self {
        let n = x.rows() as f64;
        let mut mean = vec![0.0; x.cols()];
        let mut scale = vec![1.0; x.cols()];
        for j in (0..x.cols()).filter(|&j| numeric[j]) {
            let col = x.column(j);
            let m = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean[j] = m;
            scale[j] = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
        }
        Standardizer { mean, scale }
    }

    pub fn apply_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn apply(&self, x: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = x.iter_rows().map(|r| self.apply_row(r)).collect();
        Matrix::from_vec(x.rows(), x.cols(), rows.concat())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    pub iterations: usize,
    /// Maximal KKT violation `m(alpha) - M(alpha)` at exit.
    pub kkt_gap: f64,
    pub converged: bool,
    /// Dual objective after each iteration.
    pub objective_trace: Vec<f64>,
}

enum Gram<'a> {
    Full { k: Vec<f64>, n: usize },
    OnDemand { x: &'a Matrix, kernel: Kernel },
}

impl Gram<'_> {
    fn row(&self, i: usize, buf: &mut Vec<f64>) {
        match self {
            Gram::Full { k, n } => {
                buf.clear();
                buf.extend_from_slice(&k[i * n..(i + 1) * n]);
            }
            Gram::OnDemand { x, kernel } => {
                let xi = x.row(i);
                buf.clear();
                buf.extend((0..x.rows()).map(|j| kernel.eval(xi, x.row(j))));
            }
        }
    }
}

/// Soft-margin dual by SMO with second-order working-set selection.
/// Labels are +1 / -1, `c[i]` is the box bound of row `i`.
pub fn smo(
    x: &Matrix,
    y: &[f64],
    c: &[f64],
    kernel: Kernel,
    tolerance: f64,
    max_iterations: usize,
    cache_rows: usize,
) -> SmoSolution {
    let n = x.rows();
    let gram = if n <= cache_rows {
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| kernel.eval(x.row(i), x.row(j))).collect())
            .collect();
        Gram::Full {
            k: rows.concat(),
            n,
        }
    } else {
        Gram::OnDemand { x, kernel }
    };
    let diag: Vec<f64> = (0..n).map(|i| kernel.eval(x.row(i), x.row(i))).collect();

    const TAU: f64 = 1e-12;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut trace = Vec::new();
    let mut ki = Vec::with_capacity(n);
    let mut kj = Vec::with_capacity(n);
    let up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < c[t]) || (y[t] < 0.0 && a[t] > 0.0);
    let low = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] > 0.0) || (y[t] < 0.0 && a[t] < c[t]);

    let mut iterations = 0;
    let mut gap;
    loop {
        let mut gmax = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        for t in 0..n {
            if up(t, &alpha) && -y[t] * grad[t] > gmax {
                gmax = -y[t] * grad[t];
                i = t;
            }
        }
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            if low(t, &alpha) {
                gmin = gmin.min(-y[t] * grad[t]);
            }
        }
        gap = gmax - gmin;
        if i == usize::MAX || gap < tolerance || iterations >= max_iterations {
            break;
        }
        gram.row(i, &mut ki);
        let mut j = usize::MAX;
        let mut best = f64::INFINITY;
        for t in 0..n {
            if !low(t, &alpha) {
                continue;
            }
            let b = gmax + y[t] * grad[t];
            if b > 0.0 {
                let a = diag[i] + diag[t] - 2.0 * ki[t];
                let a = if a > 0.0 { a } else { TAU };
                let v = -b * b / a;
                if v < best {
                    best = v;
                    j = t;
                }
            }
        }
        if j == usize::MAX {
            break;
        }
        gram.row(j, &mut kj);
        iterations += 1;

        let (ci, cj) = (c[i], c[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let quad = {
            let q = diag[i] + diag[j] - 2.0 * ki[j];
            if q > 0.0 {
                q
            } else {
                TAU
            }
        };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let di = alpha[i] - old_i;
        let dj = alpha[j] - old_j;
        for t in 0..n {
            // Q_it = y_i y_t K_it
            grad[t] += y[t] * (y[i] * ki[t] * di + y[j] * kj[t] * dj);
        }
        trace.push(
            0.5 * alpha
                .iter()
                .zip(&grad)
                .map(|(a, g)| a * (1.0 - g))
                .sum::<f64>(),
        );
    }

    let mut free_sum = 0.0;
    let mut free = 0usize;
    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] > 0.0 && alpha[t] < c[t] {
            free += 1;
            free_sum += yg;
        } else if (alpha[t] >= c[t] && y[t] < 0.0) || (alpha[t] <= 0.0 && y[t] > 0.0) {
            ub = ub.min(yg);
        } else {
            lb = lb.max(yg);
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else if ub.is_finite() && lb.is_finite() {
        (ub + lb) / 2.0
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };
    SmoSolution {
        alpha,
        rho,
        iterations,
        kkt_gap: gap.max(0.0),
        converged: gap < tolerance,
        objective_trace: trace,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Platt {
    pub a: f64,
    pub b: f64,
}

impl Platt {
    pub fn probability(&self, f: f64) -> f64 {
        let z = self.a * f + self.b;
        if z >= 0.0 {
            (-z).exp() / (1.0 + (-z).exp())
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

/// Newton fit of `P(y=1|f) = 1 / (1 + exp(A f + B))` with the regularized
/// targets of Lin, Lin and Weng.
pub fn fit_platt(dec: &[f64], labels: &[bool]) -> Platt {
    let prior1 = labels.iter().filter(|&&l| l).count() as f64;
    let prior0 = labels.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = labels.iter().map(|&l| if l { hi } else { lo }).collect();
    let (max_iter, min_step, sigma, eps) = (100, 1e-10, 1e-12, 1e-5);
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let fval_of = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(&f, &ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let mut fval = fval_of(a, b);
    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (&f, &ti) in dec.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < eps && g2.abs() < eps {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = fval_of(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            break;
        }
    }
    Platt { a, b }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: Kernel,
    pub c: f64,
    pub class_weight: f64,
    pub standardizer: Standardizer,
    /// Standardized support vectors, one row each.
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    pub platt: Platt,
    pub train_rows: usize,
    pub iterations: usize,
    pub kkt_gap: f64,
    pub converged: bool,
    pub final_objective: f64,
}

impl SvmModel {
    fn decision_std(&self, z: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * self.kernel.eval(sv, z))
            .sum::<f64>()
            + self.bias
    }

    pub fn decision_row(&self, x: &[f64]) -> f64 {
        self.decision_std(&self.standardizer.apply_row(x))
    }

    pub fn decision_function(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| self.decision_row(x.row(i)))
            .collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.platt.probability(self.decision_row(x))
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.decision_function(x)
            .into_iter()
            .map(|f| self.platt.probability(f))
            .collect()
    }
}

/// Class-proportional subsample of at most `cap` row indices, ascending.
pub fn stratified_subsample(y: &[u8], cap: usize, seed: u64) -> Vec<usize> {
    if y.len() <= cap {
        return (0..y.len()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(cap);
    let pos: Vec<usize> = (0..y.len()).filter(|&i| y[i] == 1).collect();
    let neg: Vec<usize> = (0..y.len()).filter(|&i| y[i] != 1).collect();
    let take_pos = ((pos.len() as f64 * cap as f64 / y.len() as f64).round() as usize)
        .clamp(1.min(pos.len()), pos.len());
    for (group, k) in [(pos, take_pos), (neg, cap - take_pos)] {
        let mut g = group;
        g.shuffle(&mut rng);
        g.truncate(k);
        out.extend(g);
    }
    out.sort_unstable();
    out
}

struct Fitted {
    sv: Vec<Vec<f64>>,
    coef: Vec<f64>,
    bias: f64,
    sol: SmoSolution,
}

fn fit_dual(z: &Matrix, y: &[u8], params: &SvmParams) -> Fitted {
    let ys: Vec<f64> = y.iter().map(|&v| if v == 1 { 1.0 } else { -1.0 }).collect();
    let c: Vec<f64> = y
        .iter()
        .map(|&v| {
            if v == 1 {
                params.c * params.class_weight
            } else {
                params.c
            }
        })
        .collect();
    let budget = params
        .max_iterations
        .unwrap_or_else(|| (200 * z.rows()).max(10_000));
    let sol = smo(
        z,
        &ys,
        &c,
        params.kernel,
        params.tolerance,
        budget,
        params.kernel_cache_rows,
    );
    let mut sv = Vec::new();
    let mut coef = Vec::new();
    for (i, &a) in sol.alpha.iter().enumerate() {
        if a > 1e-8 {
            sv.push(z.row(i).to_vec());
            coef.push(a * ys[i]);
        }
    }
    Fitted {
        sv,
        coef,
        bias: -sol.rho,
        sol,
    }
}

fn decision(f: &Fitted, kernel: Kernel, z: &[f64]) -> f64 {
    f.sv.iter()
        .zip(&f.coef)
        .map(|(s, c)| c * kernel.eval(s, z))
        .sum::<f64>()
        + f.bias
}

/// Decision values for each row from models that did not see it, or `None`
/// when a fold lacks a class.
fn out_of_fold(z: &Matrix, y: &[u8], params: &SvmParams) -> Option<Vec<f64>> {
    let k = params.platt_folds;
    if k < 2 || z.rows() < 2 * k {
        return None;
    }
    let mut order: Vec<usize> = (0..z.rows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(
        params.seed ^ 0x9e37_79b9_7f4a_7c15,
    ));
    let mut dec = vec![0.0; z.rows()];
    for fold in 0..k {
        let held: Vec<usize> = order.iter().copied().skip(fold).step_by(k).collect();
        let mut mask = vec![false; z.rows()];
        for &i in &held {
            mask[i] = true;
        }
        let fit_idx: Vec<usize> = (0..z.rows()).filter(|&i| !mask[i]).collect();
        let fy: Vec<u8> = fit_idx.iter().map(|&i| y[i]).collect();
        if fy.iter().all(|&v| v == 1) || fy.iter().all(|&v| v != 1) {
            return None;
        }
        let f = fit_dual(&z.select_rows(&fit_idx), &fy, params);
        for &i in &held {
            dec[i] = decision(&f, params.kernel, z.row(i));
        }
    }
    Some(dec)
}

pub fn train_svm(data: &Dataset, params: &SvmParams) -> Result<SvmModel, LearnError> {
    if !(params.c > 0.0) || !(params.class_weight > 0.0) {
        return Err(LearnError::InvalidParameter(
            "C and class_weight must be positive".into(),
        ));
    }
    if let Kernel::Rbf { gamma } = params.kernel {
        if !(gamma > 0.0) {
            return Err(LearnError::InvalidParameter(
                "gamma must be positive".into(),
            ));
        }
    }
    let idx = stratified_subsample(&data.y, params.max_train_rows.max(2), params.seed);
    let y: Vec<u8> = idx.iter().map(|&i| data.y[i]).collect();
    if y.iter().all(|&v| v == 1) || y.iter().all(|&v| v != 1) {
        return Err(LearnError::SingleClass);
    }
    let x = data.x.select_rows(&idx);
    let standardizer = Standardizer::fit(&x, &data.numeric);
    let z = standardizer.apply(&x);
    let fitted = fit_dual(&z, &y, params);
    let dec = out_of_fold(&z, &y, params).unwrap_or_else(|| {
        (0..z.rows())
            .map(|i| decision(&fitted, params.kernel, z.row(i)))
            .collect()
    });
    let labels: Vec<bool> = y.iter().map(|&v| v == 1).collect();
    let platt = fit_platt(&dec, &labels);
    let final_objective = fitted.sol.objective_trace.last().copied().unwrap_or(0.0);
    Ok(SvmModel {
        kernel: params.kernel,
        c: params.c,
        class_weight: params.class_weight,
        standardizer,
        support_vectors: fitted.sv,
        dual_coef: fitted.coef,
        bias: fitted.bias,
        platt,
        train_rows: z.rows(),
        iterations: fitted.sol.iterations,
        kkt_gap: fitted.sol.kkt_gap,
        converged: fitted.sol.converged,
        final_objective,
    })
}
