use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Binned, DecisionTree, Node, Targets, TreeParams};
use super::{Dataset, LearnError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub n_stages: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub class_weight: f64,
    pub max_bins: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_stages: 100,
            learning_rate: 0.1,
            max_depth: 3,
            min_leaf: 1,
            class_weight: 1.0,
            max_bins: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub initial_score: f64,
    pub learning_rate: f64,
    /// Regression trees whose leaf values are Newton steps.
    pub stages: Vec<DecisionTree>,
    /// Weighted training log-loss before the first stage and after each one.
    pub train_log_loss: Vec<f64>,
}

pub fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

impl GbtModel {
    pub fn raw_score(&self, x: &[f64]) -> f64 {
        self.stages.iter().fold(self.initial_score, |f, t| {
            f + self.learning_rate * t.predict_row(x)
        })
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        sigmoid(self.raw_score(x))
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect()
    }
}

fn log_loss(y: &[f64], w: &[f64], f: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for ((&yi, &wi), &fi) in y.iter().zip(w).zip(f) {
        // log(1 + e^f) - y f, evaluated stably
        let l = fi.max(0.0) + (-fi.abs()).exp().ln_1p() - yi * fi;
        num += wi * l;
        den += wi;
    }
    num / den
}

/// Binomial log-loss boosting with one Newton step per leaf.
pub fn train_gbt(data: &Dataset, params: &GbtParams) -> Result<GbtModel, LearnError> {
    let n = data.len();
    let pos = data.y.iter().filter(|&&v| v == 1).count();
    if pos == 0 || pos == n {
        return Err(LearnError::SingleClass);
    }
    if !(params.learning_rate > 0.0) || !(params.class_weight > 0.0) {
        return Err(LearnError::InvalidParameter(
            "learning_rate and class_weight must be positive".into(),
        ));
    }
    let y: Vec<f64> = data.y.iter().map(|&v| v as f64).collect();
    let w: Vec<f64> = data
        .y
        .iter()
        .map(|&v| if v == 1 { params.class_weight } else { 1.0 })
        .collect();
    let wsum: f64 = w.iter().sum();
    let wpos: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
    let base = wpos / wsum;
    let f0 = (base / (1.0 - base)).ln();

    let binned = Binned::new(&data.x, params.max_bins);
    let count = vec![1u32; n];
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_leaf: params.min_leaf,
        m_features: None,
    };
    // the split search never samples features, so this RNG is never drawn from
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut f = vec![f0; n];
    let mut trace = vec![log_loss(&y, &w, &f)];
    let mut stages = Vec::with_capacity(params.n_stages);
    let mut leaf_of = vec![0usize; n];
    for _ in 0..params.n_stages {
        let p: Vec<f64> = f.iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = y.iter().zip(&p).map(|(yi, pi)| yi - pi).collect();
        let targets = Targets {
            count: &count,
            weight: &w,
            y: &g,
            classification: false,
        };
        let mut tree = grow_tree(&binned, &targets, &tree_params, &mut rng);

        let mut num = vec![0.0; tree.nodes.len()];
        let mut den = vec![0.0; tree.nodes.len()];
        for i in 0..n {
            let leaf = tree.leaf_index(data.x.row(i));
            leaf_of[i] = leaf;
            num[leaf] += w[i] * g[i];
            den[leaf] += w[i] * p[i] * (1.0 - p[i]);
        }
        for (k, node) in tree.nodes.iter_mut().enumerate() {
            if let Node::Leaf { value, .. } = node {
                *value = if den[k] > 1e-12 { num[k] / den[k] } else { 0.0 };
            }
        }
        for i in 0..n {
            if let Node::Leaf { value, .. } = tree.nodes[leaf_of[i]] {
                f[i] += params.learning_rate * value;
            }
        }
        trace.push(log_loss(&y, &w, &f));
        stages.push(tree);
    }
    Ok(GbtModel {
        initial_score: f0,
        learning_rate: params.learning_rate,
        stages,
        train_log_loss: trace,
    })
}
