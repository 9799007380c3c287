use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::f1_of;
use super::split::Fold;
use super::EvalError;
use crate::learn::{train, Architecture, Dataset, Kernel, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rf_n_trees: Vec<usize>,
    pub rf_max_depth: Vec<Option<usize>>,
    pub rf_class_weight: Vec<f64>,
    pub gbt_n_stages: Vec<usize>,
    pub gbt_learning_rate: Vec<f64>,
    pub gbt_max_depth: Vec<usize>,
    pub svm_c: Vec<f64>,
    pub svm_gamma: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            rf_n_trees: vec![100, 300],
            rf_max_depth: vec![None, Some(16)],
            rf_class_weight: vec![1.0, 5.0],
            gbt_n_stages: vec![100, 300],
            gbt_learning_rate: vec![0.1, 0.3],
            gbt_max_depth: vec![2, 3],
            svm_c: vec![1.0, 10.0, 100.0],
            svm_gamma: vec![0.01, 0.1, 1.0],
        }
    }
}

impl GridSpec {
    /// Cells in declared order (first axis outermost), built on `base`.
    pub fn cells(&self, base: &ModelParams) -> Vec<ModelParams> {
        let mut out = Vec::new();
        match base {
            ModelParams::Rf(b) => {
                for &n in &self.rf_n_trees {
                    for &d in &self.rf_max_depth {
                        for &w in &self.rf_class_weight {
                            let mut p = b.clone();
                            p.n_trees = n;
                            p.max_depth = d;
                            p.class_weight = w;
                            out.push(ModelParams::Rf(p));
                        }
                    }
                }
            }
            ModelParams::Gbt(b) => {
                for &n in &self.gbt_n_stages {
                    for &lr in &self.gbt_learning_rate {
                        for &d in &self.gbt_max_depth {
                            let mut p = b.clone();
                            p.n_stages = n;
                            p.learning_rate = lr;
                            p.max_depth = d;
                            out.push(ModelParams::Gbt(p));
                        }
                    }
                }
            }
            ModelParams::Svm(b) => {
                for &c in &self.svm_c {
                    let gammas: Vec<Option<f64>> = match b.kernel {
                        Kernel::Rbf { .. } => self.svm_gamma.iter().map(|&g| Some(g)).collect(),
                        Kernel::Linear => vec![None],
                    };
                    for g in gammas {
                        let mut p = b.clone();
                        p.c = c;
                        if let Some(gamma) = g {
                            p.kernel = Kernel::Rbf { gamma };
                        }
                        out.push(ModelParams::Svm(p));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub params: ModelParams,
    pub fold_f1: Vec<f64>,
    /// Mean anomalous-class F1 over folds; -1 when training failed.
    pub mean_f1: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub architecture: Architecture,
    pub cells: Vec<CellResult>,
    pub best: usize,
}

impl GridResult {
    pub fn best_params(&self) -> &ModelParams {
        &self.cells[self.best].params
    }
}

pub fn evaluate_cell(data: &Dataset, folds: &[Fold], params: &ModelParams) -> CellResult {
    let mut fold_f1 = Vec::with_capacity(folds.len());
    for fold in folds {
        let fit = data.subset(&fold.fit);
        let model = match train(&fit, params) {
            Ok(m) => m,
            Err(e) => {
                return CellResult {
                    params: params.clone(),
                    fold_f1,
                    mean_f1: -1.0,
                    error: Some(e.to_string()),
                }
            }
        };
        let eval = data.subset(&fold.eval);
        let classes = model
            .predict_proba(&eval.x)
            .into_iter()
            .map(|p| (p >= 0.5) as u8);
        fold_f1.push(f1_of(classes, &eval.y));
    }
    let mean_f1 = fold_f1.iter().sum::<f64>() / fold_f1.len() as f64;
    CellResult {
        params: params.clone(),
        fold_f1,
        mean_f1,
        error: None,
    }
}

/// First cell with the highest mean fold F1.
pub fn best_cell(cells: &[CellResult]) -> usize {
    let mut best = 0;
    for (i, c) in cells.iter().enumerate() {
        if c.mean_f1 > cells[best].mean_f1 {
            best = i;
        }
    }
    best
}

/// Scores every cell on every fold. A cell whose training fails scores -1
/// instead of aborting the search.
pub fn grid_search(
    data: &Dataset,
    folds: &[Fold],
    cells: &[ModelParams],
) -> Result<GridResult, EvalError> {
    let Some(first) = cells.first() else {
        return Err(EvalError::EmptyGrid);
    };
    if folds.is_empty() {
        return Err(EvalError::InvalidParameter("no folds".into()));
    }
    let architecture = first.architecture();
    if cells.iter().any(|c| c.architecture() != architecture) {
        return Err(EvalError::InvalidParameter(
            "grid mixes architectures".into(),
        ));
    }
    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|p| evaluate_cell(data, folds, p))
        .collect();
    let best = best_cell(&results);
    Ok(GridResult {
        architecture,
        cells: results,
        best,
    })
}
