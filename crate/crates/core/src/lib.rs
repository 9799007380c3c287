//! Detection of invoice line-items that are out of place in a legal case's lifecycle.
//!
//! The pipeline ingests pipe-delimited invoice files, selects well-distributed
//! litigation cases (phase mix -> SVD -> t-SNE -> DBSCAN), injects labeled
//! lifecycle anomalies, trains forest / boosted-tree / SVM classifiers and
//! reports anomalous-class metrics.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod caseselect;
pub mod evaluate;
pub mod featurize;
pub mod ingest;
pub mod learn;
pub mod matrix;
pub mod pipeline;
pub mod synth;
