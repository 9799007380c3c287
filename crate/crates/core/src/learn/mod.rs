//! From-scratch binary classifiers: CART trees, random forests, gradient
//! boosted trees and a kernel SVM, each reporting a class-1 probability.

mod forest;
mod gbt;
mod svm;
mod tree;

use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use forest::{bootstrap_counts, default_m_features, train_forest, ForestModel, ForestParams};
pub use gbt::{sigmoid, train_gbt, GbtModel, GbtParams};
pub use svm::{
    fit_platt, smo, stratified_subsample, train_svm, Kernel, Platt, SmoSolution, Standardizer,
    SvmModel, SvmParams,
};
pub use tree::{gini, grow_tree, Binned, DecisionTree, Node, Targets, TreeParams};

use crate::featurize::EncodedMatrix;
use crate::matrix::Matrix;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("training data holds a single class")]
    SingleClass,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("dataset: {0}")]
    InvalidData(String),
    #[error(
        "feature columns differ from training (missing: [{missing}], unexpected: [{unexpected}])"
    )]
    ColumnMismatch { missing: String, unexpected: String },
    #[error("unsupported model format version {0}")]
    Version(u32),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Encoded features with binary labels and per-row chronological keys.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub row_ids: Vec<String>,
    pub x: Matrix,
    pub y: Vec<u8>,
    pub keys: Vec<NaiveDate>,
    pub columns: Vec<String>,
    pub numeric: Vec<bool>,
}

impl Dataset {
    pub fn new(
        encoded: &EncodedMatrix,
        y: Vec<u8>,
        keys: Vec<NaiveDate>,
    ) -> Result<Self, LearnError> {
        let n = encoded.matrix.rows();
        if y.len() != n || keys.len() != n {
            return Err(LearnError::InvalidData(format!(
                "{n} rows but {} labels and {} keys",
                y.len(),
                keys.len()
            )));
        }
        if !encoded.matrix.is_finite() {
            return Err(LearnError::InvalidData("non-finite feature value".into()));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(LearnError::InvalidData("labels must be 0 or 1".into()));
        }
        Ok(Dataset {
            row_ids: encoded.row_ids.clone(),
            x: encoded.matrix.clone(),
            y,
            keys,
            columns: encoded.columns.clone(),
            numeric: encoded.numeric_mask(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            row_ids: idx.iter().map(|&i| self.row_ids[i].clone()).collect(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            keys: idx.iter().map(|&i| self.keys[i]).collect(),
            columns: self.columns.clone(),
            numeric: self.numeric.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Rf,
    Gbt,
    Svm,
}

impl Architecture {
    pub const ALL: [Architecture; 3] = [Architecture::Rf, Architecture::Gbt, Architecture::Svm];

    pub fn as_str(self) -> &'static str {
        match self {
            Architecture::Rf => "rf",
            Architecture::Gbt => "gbt",
            Architecture::Svm => "svm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Architecture::Rf => "RF",
            Architecture::Gbt => "GBT",
            Architecture::Svm => "SVM",
        }
    }
}

impl FromStr for Architecture {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rf" | "forest" => Ok(Architecture::Rf),
            "gbt" => Ok(Architecture::Gbt),
            "svm" => Ok(Architecture::Svm),
            other => Err(format!(
                "unknown architecture '{other}' (expected rf, gbt or svm)"
            )),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", content = "params", rename_all = "lowercase")]
pub enum ModelParams {
    Rf(ForestParams),
    Gbt(GbtParams),
    Svm(SvmParams),
}

impl ModelParams {
    pub fn architecture(&self) -> Architecture {
        match self {
            ModelParams::Rf(_) => Architecture::Rf,
            ModelParams::Gbt(_) => Architecture::Gbt,
            ModelParams::Svm(_) => Architecture::Svm,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "architecture", content = "model", rename_all = "lowercase")]
pub enum TrainedModel {
    Rf(ForestModel),
    Gbt(GbtModel),
    Svm(SvmModel),
}

impl TrainedModel {
    pub fn architecture(&self) -> Architecture {
        match self {
            TrainedModel::Rf(_) => Architecture::Rf,
            TrainedModel::Gbt(_) => Architecture::Gbt,
            TrainedModel::Svm(_) => Architecture::Svm,
        }
    }

    /// Probability of class 1 per row.
    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        match self {
            TrainedModel::Rf(m) => m.predict_proba(x),
            TrainedModel::Gbt(m) => m.predict_proba(x),
            TrainedModel::Svm(m) => m.predict_proba(x),
        }
    }
}

pub fn train(data: &Dataset, params: &ModelParams) -> Result<TrainedModel, LearnError> {
    Ok(match params {
        ModelParams::Rf(p) => TrainedModel::Rf(train_forest(data, p)?),
        ModelParams::Gbt(p) => TrainedModel::Gbt(train_gbt(data, p)?),
        ModelParams::Svm(p) => TrainedModel::Svm(train_svm(data, p)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub row_id: String,
    pub class: u8,
    /// Probability of the predicted class.
    pub confidence: f64,
}

impl Prediction {
    pub fn from_probability(row_id: String, p1: f64) -> Self {
        if p1 >= 0.5 {
            Prediction {
                row_id,
                class: 1,
                confidence: p1,
            }
        } else {
            Prediction {
                row_id,
                class: 0,
                confidence: 1.0 - p1,
            }
        }
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Serialized model: format version, feature columns, training parameters
/// and fitted structure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub columns: Vec<String>,
    pub params: ModelParams,
    pub model: TrainedModel,
}

impl ModelDocument {
    pub fn new(columns: Vec<String>, params: ModelParams, model: TrainedModel) -> Self {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            columns,
            params,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String, LearnError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, LearnError> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(LearnError::Version(doc.format_version));
        }
        Ok(doc)
    }

    pub fn check_columns(&self, columns: &[String]) -> Result<(), LearnError> {
        if self.columns == columns {
            return Ok(());
        }
        let missing: Vec<&str> = self
            .columns
            .iter()
            .filter(|c| !columns.contains(c))
            .map(String::as_str)
            .collect();
        let unexpected: Vec<&str> = columns
            .iter()
            .filter(|c| !self.columns.contains(c))
            .map(String::as_str)
            .collect();
        Err(LearnError::ColumnMismatch {
            missing: missing.join(", "),
            unexpected: unexpected.join(", "),
        })
    }

    pub fn predict(
        &self,
        row_ids: &[String],
        columns: &[String],
        x: &Matrix,
    ) -> Result<Vec<Prediction>, LearnError> {
        self.check_columns(columns)?;
        Ok(predict(&self.model, row_ids, x))
    }
}

pub fn predict(model: &TrainedModel, row_ids: &[String], x: &Matrix) -> Vec<Prediction> {
    model
        .predict_proba(x)
        .into_iter()
        .zip(row_ids)
        .map(|(p, id)| Prediction::from_probability(id.clone(), p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_probability_predicts_anomaly() {
        let p = Prediction::from_probability("r".into(), 0.5);
        assert_eq!((p.class, p.confidence), (1, 0.5));
        let p = Prediction::from_probability("r".into(), 0.8);
        assert_eq!((p.class, p.confidence), (1, 0.8));
        let p = Prediction::from_probability("r".into(), 0.1);
        assert_eq!(p.class, 0);
        assert!((p.confidence - 0.9).abs() < 1e-15);
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn column_mismatch_names_columns() {
        let doc = ModelDocument::new(
            vec!["a".into(), "b".into()],
            ModelParams::Gbt(GbtParams::default()),
            TrainedModel::Gbt(GbtModel {
                initial_score: 0.0,
                learning_rate: 0.1,
                stages: vec![],
                train_log_loss: vec![],
            }),
        );
        let err = doc
            .check_columns(&["a".to_string(), "c".to_string()])
            .unwrap_err()
            .to_string();
        assert!(err.contains("missing: [b]") && err.contains("unexpected: [c]"));
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
    }
}
