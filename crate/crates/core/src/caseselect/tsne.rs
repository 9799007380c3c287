//! Exact t-SNE with per-point perplexity calibration.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::svd::{center_columns, decompose};
use super::SelectError;
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TsneInit {
    Pca,
    Random,
}

impl FromStr for TsneInit {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(TsneInit::Pca),
            "random" => Ok(TsneInit::Random),
            other => Err(format!(
                "unknown t-SNE init '{other}' (expected pca or random)"
            )),
        }
    }
}

impl fmt::Display for TsneInit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TsneInit::Pca => "pca",
            TsneInit::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub learning_rate: f64,
    pub iterations: usize,
    pub init: TsneInit,
    pub seed: u64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
}

impl Default for TsneParams {
    fn default() -> Self {
        TsneParams {
            perplexity: 25.0,
            learning_rate: 50.0,
            iterations: 10_000,
            init: TsneInit::Pca,
            seed: 0,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlCheckpoint {
    pub iteration: usize,
    pub kl_divergence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2D {
    pub case_ids: Vec<String>,
    pub coordinates: Vec<[f64; 2]>,
    pub kl_divergence: f64,
    pub kl_trace: Vec<KlCheckpoint>,
}

const MAX_BISECTION_STEPS: usize = 50;
const PERPLEXITY_TOLERANCE: f64 = 1e-5;
const MIN_PROBABILITY: f64 = 1e-12;

fn pairwise_sq_distances(x: &Matrix) -> Vec<f64> {
    let n = x.rows();
    let mut d = vec![0.0; n * n];
    d.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let xi = x.row(i);
        for (j, out) in row.iter_mut().enumerate() {
            *out = xi
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    });
    d
}

/// Fills `p` with `P(j|i)` for one row given precision `beta`; returns the entropy.
fn row_distribution(dist: &[f64], i: usize, beta: f64, p: &mut [f64]) -> f64 {
    let dmin = dist
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (pj, &d)) in p.iter_mut().zip(dist).enumerate() {
        *pj = if j == i {
            0.0
        } else {
            (-beta * (d - dmin)).exp()
        };
        sum += *pj;
    }
    let mut weighted = 0.0;
    for (pj, &d) in p.iter_mut().zip(dist) {
        *pj /= sum;
        weighted += *pj * (d - dmin);
    }
    sum.ln() + beta * weighted
}

/// Row-stochastic conditional affinities `P(j|i)` (row-major N x N), each row
/// calibrated by bisection on its Gaussian precision to the target perplexity.
pub fn conditional_probabilities(sq_dist: &[f64], n: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    p.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let dist = &sq_dist[i * n..(i + 1) * n];
        let mut beta = 1.0;
        let mut lo = f64::NEG_INFINITY;
        let mut hi = f64::INFINITY;
        for _ in 0..MAX_BISECTION_STEPS {
            let h = row_distribution(dist, i, beta, row);
            if (h.exp() - perplexity).abs() <= PERPLEXITY_TOLERANCE {
                return;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = if lo.is_finite() {
                    (beta + lo) / 2.0
                } else {
                    beta / 2.0
                };
            }
        }
        row_distribution(dist, i, beta, row);
    });
    p
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen();
    let u2: f64 = rng.gen();
    (-2.0 * (1.0 - u1).ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn initial_embedding(x: &Matrix, init: TsneInit, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = x.rows();
    match init {
        TsneInit::Random => (0..n)
            .map(|_| [1e-4 * standard_normal(rng), 1e-4 * standard_normal(rng)])
            .collect(),
        TsneInit::Pca => {
            let dec = decompose(&center_columns(x));
            let first = dec.scores.column(0);
            let mean = first.iter().sum::<f64>() / n as f64;
            let sd = (first.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            let scale = if sd > 0.0 { 1e-4 / sd } else { 1.0 };
            (0..n)
                .map(|i| {
                    let second = if x.cols() >= 2 {
                        dec.scores.get(i, 1) * scale
                    } else {
                        1e-4 * standard_normal(rng)
                    };
                    [dec.scores.get(i, 0) * scale, second]
                })
                .collect()
        }
    }
}

/// Unnormalized Student-t kernel `1 / (1 + |yi - yj|^2)` with zero diagonal,
/// and the row sums used for normalization.
fn student_kernel(y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let row_sums: Vec<f64> = num
        .par_chunks_mut(n)
        .enumerate()
        .map(|(i, row)| {
            let yi = y[i];
            let mut s = 0.0;
            for (j, out) in row.iter_mut().enumerate() {
                if i == j {
                    *out = 0.0;
                    continue;
                }
                let dx = yi[0] - y[j][0];
                let dy = yi[1] - y[j][1];
                *out = 1.0 / (1.0 + dx * dx + dy * dy);
                s += *out;
            }
            s
        })
        .collect();
    row_sums.iter().sum()
}

fn kl_divergence(p: &[f64], num: &[f64], z: f64) -> f64 {
    p.iter()
        .zip(num)
        .filter(|(&pij, _)| pij > 0.0)
        .map(|(&pij, &nij)| {
            let q = (nij / z).max(MIN_PROBABILITY);
            pij * (pij / q).ln()
        })
        .sum()
}

pub fn tsne_embed(
    case_ids: Vec<String>,
    scores: &Matrix,
    params: &TsneParams,
) -> Result<Embedding2D, SelectError> {
    let n = scores.rows();
    if !(params.perplexity > 0.0) || (n as f64) <= 3.0 * params.perplexity {
        return Err(SelectError::PerplexityInfeasible {
            perplexity: params.perplexity,
            n,
        });
    }
    if !scores.is_finite() {
        return Err(SelectError::InvalidParameter("non-finite input".into()));
    }

    let d = pairwise_sq_distances(scores);
    let cond = conditional_probabilities(&d, n, params.perplexity);
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] =
                    ((cond[i * n + j] + cond[j * n + i]) / (2.0 * n as f64)).max(MIN_PROBABILITY);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut y = initial_embedding(scores, params.init, &mut rng);
    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut kl_trace = Vec::new();
    let mut last_kl = f64::NAN;

    for it in 0..params.iterations {
        let exaggerate = it < params.exaggeration_iterations;
        let exag = if exaggerate {
            params.early_exaggeration
        } else {
            1.0
        };
        let momentum = if exaggerate {
            params.initial_momentum
        } else {
            params.final_momentum
        };

        let z = student_kernel(&y, &mut num);
        let grads: Vec<[f64; 2]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let yi = y[i];
                let mut g = [0.0; 2];
                for j in 0..n {
                    let w = num[i * n + j];
                    let mult = (exag * p[i * n + j] - w / z) * w;
                    g[0] += mult * (yi[0] - y[j][0]);
                    g[1] += mult * (yi[1] - y[j][1]);
                }
                [4.0 * g[0], 4.0 * g[1]]
            })
            .collect();

        for i in 0..n {
            for k in 0..2 {
                let g = grads[i][k];
                let gain = &mut gains[i][k];
                *gain = if (g > 0.0) != (update[i][k] > 0.0) {
                    *gain + 0.2
                } else {
                    (*gain * 0.8).max(0.01)
                };
                update[i][k] = momentum * update[i][k] - params.learning_rate * *gain * g;
                y[i][k] += update[i][k];
            }
        }

        if (it + 1) % 100 == 0 || it + 1 == params.iterations {
            let z = student_kernel(&y, &mut num);
            last_kl = kl_divergence(&p, &num, z);
            kl_trace.push(KlCheckpoint {
                iteration: it + 1,
                kl_divergence: last_kl,
            });
        }
    }
    if params.iterations == 0 {
        let z = student_kernel(&y, &mut num);
        last_kl = kl_divergence(&p, &num, z);
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(SelectError::InvalidParameter(
            "t-SNE diverged to non-finite coordinates".into(),
        ));
    }
    Ok(Embedding2D {
        case_ids,
        coordinates: y,
        kl_divergence: last_kl,
        kl_trace,
    })
}
