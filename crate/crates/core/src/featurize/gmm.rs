//! Two-dimensional Gaussian mixture over `(ln(1+rate), ln(1+total))`, fitted by EM.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::FeaturizeError;

pub type Point2 = [f64; 2];
pub type Cov2 = [[f64; 2]; 2];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    /// Stop when the mean per-point log-likelihood improves by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Added to the covariance diagonal after every M-step.
    pub regularization: f64,
}

impl Default for GmmOptions {
    fn default() -> Self {
        GmmOptions {
            tolerance: 1e-6,
            max_iterations: 200,
            regularization: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BillingModeModel {
    pub k: usize,
    pub seed: u64,
    pub weights: Vec<f64>,
    pub means: Vec<Point2>,
    pub covariances: Vec<Cov2>,
    /// Mean per-point log-likelihood after each E-step.
    pub log_likelihood_trace: Vec<f64>,
    pub converged: bool,
}

pub fn billing_point(rate: f64, total: f64) -> Point2 {
    [rate.ln_1p(), total.ln_1p()]
}

fn log_density(x: &Point2, mean: &Point2, cov: &Cov2) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let dx = x[0] - mean[0];
    let dy = x[1] - mean[1];
    // inverse of [[a, b], [b, d]] is [[d, -b], [-b, a]] / det
    let mahal = (cov[1][1] * dx * dx - 2.0 * cov[0][1] * dx * dy + cov[0][0] * dy * dy) / det;
    -(2.0 * PI).ln() - 0.5 * det.ln() - 0.5 * mahal
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn dist2(a: &Point2, b: &Point2) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn weighted_cov(points: &[Point2], resp: impl Fn(usize) -> f64, mean: &Point2, mass: f64) -> Cov2 {
    let mut c = [[0.0; 2]; 2];
    for (i, p) in points.iter().enumerate() {
        let r = resp(i);
        if r == 0.0 {
            continue;
        }
        let dx = p[0] - mean[0];
        let dy = p[1] - mean[1];
        c[0][0] += r * dx * dx;
        c[0][1] += r * dx * dy;
        c[1][1] += r * dy * dy;
    }
    c[0][0] /= mass;
    c[0][1] /= mass;
    c[1][1] /= mass;
    c[1][0] = c[0][1];
    c
}

fn regularize(mut c: Cov2, eps: f64) -> Cov2 {
    c[0][0] += eps;
    c[1][1] += eps;
    c
}

/// k-means++ seeding followed by Lloyd refinement; returns hard assignments.
fn kmeans_init(points: &[Point2], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut centers: Vec<Point2> = vec![points[rng.gen_range(0..n)]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[next]);
        let c = centers[centers.len() - 1];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &c));
        }
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let mut best = 0;
            let mut best_d = dist2(p, &centers[0]);
            for (j, c) in centers.iter().enumerate().skip(1) {
                let d = dist2(p, c);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (j, c) in centers.iter_mut().enumerate() {
            let mut s = [0.0; 2];
            let mut m = 0usize;
            for (p, _) in points.iter().zip(&assign).filter(|(_, &a)| a == j) {
                s[0] += p[0];
                s[1] += p[1];
                m += 1;
            }
            if m > 0 {
                *c = [s[0] / m as f64, s[1] / m as f64];
            }
        }
    }
    assign
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Point2>,
    covs: Vec<Cov2>,
}

impl BillingModeModel {
    /// Per-component `ln(weight) + ln N(point | mean, cov)`.
    pub fn component_log_scores(&self, point: &Point2) -> Vec<f64> {
        (0..self.k)
            .map(|j| {
                self.weights[j].ln() + log_density(point, &self.means[j], &self.covariances[j])
            })
            .collect()
    }

    /// Posterior responsibilities for a single point.
    pub fn responsibilities(&self, point: &Point2) -> Vec<f64> {
        let s = self.component_log_scores(point);
        let lse = log_sum_exp(&s);
        s.iter().map(|v| (v - lse).exp()).collect()
    }

    /// Mean per-point log-likelihood of `points` under the model.
    pub fn mean_log_likelihood(&self, points: &[Point2]) -> f64 {
        let total: f64 = points
            .iter()
            .map(|p| log_sum_exp(&self.component_log_scores(p)))
            .sum();
        total / points.len() as f64
    }
}

fn initial_params(points: &[Point2], k: usize, reg: f64, rng: &mut ChaCha8Rng) -> Params {
    let n = points.len() as f64;
    let assign = kmeans_init(points, k, rng);
    let global_mean = [
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let global_cov = weighted_cov(points, |_| 1.0, &global_mean, n);
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for j in 0..k {
        let members: Vec<Point2> = points
            .iter()
            .zip(&assign)
            .filter(|(_, &a)| a == j)
            .map(|(p, _)| *p)
            .collect();
        let m = members.len();
        if m == 0 {
            weights.push(1.0 / n);
            means.push(global_mean);
            covs.push(regularize(global_cov, reg));
            continue;
        }
        let mean = [
            members.iter().map(|p| p[0]).sum::<f64>() / m as f64,
            members.iter().map(|p| p[1]).sum::<f64>() / m as f64,
        ];
        let cov = if m >= 2 {
            weighted_cov(&members, |_| 1.0, &mean, m as f64)
        } else {
            global_cov
        };
        weights.push(m as f64 / n);
        means.push(mean);
        covs.push(regularize(cov, reg));
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Params {
        weights,
        means,
        covs,
    }
}

/// E-step: responsibilities (row-major N x K) and mean log-likelihood.
fn e_step(points: &[Point2], p: &Params) -> (Vec<f64>, f64) {
    let k = p.weights.len();
    let mut resp = vec![0.0; points.len() * k];
    let mut ll = 0.0;
    let mut scores = vec![0.0; k];
    for (i, x) in points.iter().enumerate() {
        for j in 0..k {
            scores[j] = p.weights[j].ln() + log_density(x, &p.means[j], &p.covs[j]);
        }
        let lse = log_sum_exp(&scores);
        ll += lse;
        for j in 0..k {
            resp[i * k + j] = (scores[j] - lse).exp();
        }
    }
    (resp, ll / points.len() as f64)
}

fn m_step(points: &[Point2], resp: &[f64], prev: &Params, reg: f64) -> Params {
    let k = prev.weights.len();
    let n = points.len() as f64;
    let mut weights = Vec::with_capacity(k);
    let mut means = Vec::with_capacity(k);
    let mut covs = Vec::with_capacity(k);
    for j in 0..k {
        let mass: f64 = (0..points.len()).map(|i| resp[i * k + j]).sum();
        if mass <= 1e-10 * n {
            // collapsed component keeps its shape with vanishing weight
            weights.push(mass.max(f64::MIN_POSITIVE) / n);
            means.push(prev.means[j]);
            covs.push(prev.covs[j]);
            continue;
        }
        let mut mean = [0.0; 2];
        for (i, p) in points.iter().enumerate() {
            let r = resp[i * k + j];
            mean[0] += r * p[0];
            mean[1] += r * p[1];
        }
        mean[0] /= mass;
        mean[1] /= mass;
        let cov = weighted_cov(points, |i| resp[i * k + j], &mean, mass);
        weights.push(mass / n);
        means.push(mean);
        covs.push(regularize(cov, reg));
    }
    let s: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= s);
    Params {
        weights,
        means,
        covs,
    }
}

pub fn fit_billing_mode_gmm(
    points: &[Point2],
    k: usize,
    seed: u64,
) -> Result<BillingModeModel, FeaturizeError> {
    fit_billing_mode_gmm_with(points, k, seed, GmmOptions::default())
}

pub fn fit_billing_mode_gmm_with(
    points: &[Point2],
    k: usize,
    seed: u64,
    opts: GmmOptions,
) -> Result<BillingModeModel, FeaturizeError> {
    if k == 0 || k > points.len() {
        return Err(FeaturizeError::ComponentCount { k, n: points.len() });
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FeaturizeError::NonFinite);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = initial_params(points, k, opts.regularization, &mut rng);
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    for _ in 0..opts.max_iterations {
        let (resp, ll) = e_step(points, &params);
        let improved = trace.last().map(|prev| ll - prev);
        trace.push(ll);
        if let Some(delta) = improved {
            if delta.abs() < opts.tolerance {
                converged = true;
                break;
            }
        }
        params = m_step(points, &resp, &params, opts.regularization);
    }
    if !converged {
        // the final M-step has not been scored yet
        let (_, ll) = e_step(points, &params);
        trace.push(ll);
    }
    Ok(BillingModeModel {
        k,
        seed,
        weights: params.weights,
        means: params.means,
        covariances: params.covs,
        log_likelihood_trace: trace,
        converged,
    })
}

/// Component with the largest posterior; ties resolve to the lower index.
pub fn billing_mode(model: &BillingModeModel, point: &Point2) -> Result<usize, FeaturizeError> {
    if !point.iter().all(|v| v.is_finite()) {
        return Err(FeaturizeError::NonFinite);
    }
    let scores = model.component_log_scores(point);
    let mut best = 0;
    for (j, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = j;
        }
    }
    Ok(best)
}
