use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, Binned, DecisionTree, Targets, TreeParams};
use super::{Dataset, LearnError};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Candidate features per split; `None` means `ceil(sqrt(d))`.
    pub m_features: Option<usize>,
    pub bootstrap: bool,
    /// Weight of anomalous rows in the impurity.
    pub class_weight: f64,
    pub max_bins: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            m_features: None,
            bootstrap: true,
            class_weight: 1.0,
            max_bins: 256,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub tree_seeds: Vec<u64>,
    pub m_features: usize,
}

impl ForestModel {
    /// Fraction of trees voting class 1.
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let votes = self
            .trees
            .iter()
            .filter(|t| t.predict_row(x) >= 0.5)
            .count();
        votes as f64 / self.trees.len() as f64
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows())
            .into_par_iter()
            .map(|i| self.predict_row(x.row(i)))
            .collect()
    }
}

pub fn default_m_features(d: usize) -> usize {
    ((d as f64).sqrt().ceil() as usize).max(1)
}

/// Per-tree bootstrap multiplicities: `n` draws with replacement.
pub fn bootstrap_counts(n: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut c = vec![0u32; n];
    for _ in 0..n {
        c[rng.gen_range(0..n)] += 1;
    }
    c
}

pub fn train_forest(data: &Dataset, params: &ForestParams) -> Result<ForestModel, LearnError> {
    if params.n_trees == 0 {
        return Err(LearnError::InvalidParameter("n_trees must be >= 1".into()));
    }
    if !(params.class_weight > 0.0) {
        return Err(LearnError::InvalidParameter(
            "class_weight must be positive".into(),
        ));
    }
    let d = data.x.cols();
    let m = params
        .m_features
        .unwrap_or_else(|| default_m_features(d))
        .min(d);
    let binned = Binned::new(&data.x, params.max_bins);
    let y: Vec<f64> = data.y.iter().map(|&v| v as f64).collect();
    let weight: Vec<f64> = data
        .y
        .iter()
        .map(|&v| if v == 1 { params.class_weight } else { 1.0 })
        .collect();
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        m_features: Some(m),
    };
    let tree_seeds: Vec<u64> = (0..params.n_trees as u64)
        .map(|t| params.seed.wrapping_add(t))
        .collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let count = if params.bootstrap {
                bootstrap_counts(data.len(), &mut rng)
            } else {
                vec![1; data.len()]
            };
            let targets = Targets {
                count: &count,
                weight: &weight,
                y: &y,
                classification: true,
            };
            grow_tree(&binned, &targets, &tree_params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        tree_seeds,
        m_features: m,
    })
}
