//! Independent reference implementations and seeded fixtures shared by the
//! integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use invoice_lifecycle::featurize::{
    billing_points, build_feature_rows, fit_billing_mode_gmm, FeatureRow,
};
use invoice_lifecycle::learn::Dataset;
use invoice_lifecycle::matrix::Matrix;
use invoice_lifecycle::synth::{gen_corpus, ComboKey, ComboStats, CorpusSpec};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Three Gaussian blobs plus uniform background points in the plane.
pub fn blob_points(seed: u64, n: usize) -> Vec<[f64; 2]> {
    let mut r = rng(seed);
    let centers = [[0.0, 0.0], [4.0, 1.0], [1.5, 5.0]];
    let noise = Normal::new(0.0, 0.6).unwrap();
    (0..n)
        .map(|i| {
            if i % 10 == 9 {
                [r.gen_range(-3.0..7.0), r.gen_range(-3.0..8.0)]
            } else {
                let c = centers[i % 3];
                [c[0] + noise.sample(&mut r), c[1] + noise.sample(&mut r)]
            }
        })
        .collect()
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    (a[0] - b[0]) * (a[0] - b[0]) + (a[1] - b[1]) * (a[1] - b[1])
}

/// O(n^2) DBSCAN: core points from full distance scans, clusters as connected
/// components of core points (union-find), border points to the nearest core
/// neighbor with the lower index on ties.
pub fn brute_force_dbscan(points: &[[f64; 2]], eps: f64, min_samples: usize) -> Vec<i32> {
    let n = points.len();
    let eps2 = eps * eps;
    let near = |i: usize, j: usize| dist2(&points[i], &points[j]) <= eps2;
    let core: Vec<bool> = (0..n)
        .map(|i| (0..n).filter(|&j| near(i, j)).count() >= min_samples)
        .collect();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if core[i] && core[j] && near(i, j) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut ids: BTreeMap<usize, i32> = BTreeMap::new();
    let mut labels = vec![-1; n];
    for i in 0..n {
        if core[i] {
            let root = find(&mut parent, i);
            let next = ids.len() as i32;
            labels[i] = *ids.entry(root).or_insert(next);
        }
    }
    for i in (0..n).filter(|&i| !core[i]) {
        let mut best: Option<(f64, usize)> = None;
        for j in (0..n).filter(|&j| core[j] && near(i, j)) {
            let d = dist2(&points[i], &points[j]);
            if best.map_or(true, |(bd, _)| d < bd) {
                best = Some((d, j));
            }
        }
        if let Some((_, j)) = best {
            labels[i] = labels[j];
        }
    }
    labels
}

/// True when the labelings are equal up to a bijective renaming of clusters,
/// with noise (-1) matching only noise.
pub fn same_partition(a: &[i32], b: &[i32]) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let mut fwd: BTreeMap<i32, i32> = BTreeMap::new();
    let mut back: BTreeMap<i32, i32> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        if (x < 0) != (y < 0) {
            return false;
        }
        if *fwd.entry(x).or_insert(y) != y || *back.entry(y).or_insert(x) != x {
            return false;
        }
    }
    true
}

pub fn random_matrix(seed: u64, rows: usize, cols: usize) -> Matrix {
    let mut r = rng(seed);
    let data: Vec<f64> = (0..rows * cols).map(|_| r.gen::<f64>()).collect();
    Matrix::from_vec(rows, cols, data)
}

/// Eigenvalues of the sample covariance, descending, as shares of their sum.
pub fn covariance_explained_ratios(m: &Matrix) -> Vec<f64> {
    let (n, d) = (m.rows(), m.cols());
    let x = DMatrix::from_row_slice(n, d, m.data());
    let mean = x.row_mean();
    let mut centered = x.clone();
    for mut row in centered.row_iter_mut() {
        row -= &mean;
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let mut eig: Vec<f64> = SymmetricEigen::new(cov)
        .eigenvalues
        .iter()
        .map(|v| v.max(0.0))
        .collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = eig.iter().sum();
    eig.into_iter().map(|v| v / total).collect()
}

fn gini_count(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

/// Best root split by scanning every feature and every midpoint between
/// consecutive distinct values, minimizing the size-weighted Gini impurity.
/// Ties keep the lowest feature, then the lowest threshold.
pub fn exhaustive_root_split(x: &Matrix, y: &[u8]) -> Option<(usize, f64)> {
    let n = x.rows();
    let total_pos = y.iter().filter(|&&v| v == 1).count();
    let parent = n as f64 * gini_count(total_pos, n);
    let mut best: Option<(f64, usize, f64)> = None;
    for f in 0..x.cols() {
        let mut values = x.column(f);
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut nl, mut pl) = (0, 0);
            for i in 0..n {
                if x.get(i, f) <= t {
                    nl += 1;
                    pl += y[i] as usize;
                }
            }
            let imp = nl as f64 * gini_count(pl, nl)
                + (n - nl) as f64 * gini_count(total_pos - pl, n - nl);
            let tol = 1e-12 * parent.max(1.0);
            let better = match best {
                None => imp < parent - tol,
                Some((b, _, _)) => imp < b - tol,
            };
            if better {
                best = Some((imp, f, t));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

/// Distinct keys in a first pass, then per-key count/min/sum in a second.
pub fn two_pass_combo_stats(rows: &[FeatureRow]) -> BTreeMap<ComboKey, ComboStats> {
    let keys: BTreeSet<ComboKey> = rows.iter().map(ComboKey::of).collect();
    keys.into_iter()
        .map(|k| {
            let days: Vec<u32> = rows
                .iter()
                .filter(|r| ComboKey::of(r) == k)
                .map(|r| r.days_since_open)
                .collect();
            let stats = ComboStats {
                count: days.len() as u64,
                min_days: *days.iter().min().unwrap(),
                sum_days: days.iter().map(|&d| d as u64).sum(),
            };
            (k, stats)
        })
        .collect()
}

/// Feature rows of a small generated corpus.
pub fn feature_rows(seed: u64, n_cases: usize) -> Vec<FeatureRow> {
    let corpus = gen_corpus(&CorpusSpec {
        n_cases,
        seed,
        ..CorpusSpec::default()
    })
    .unwrap();
    let gmm = fit_billing_mode_gmm(&billing_points(&corpus.cases), 2, seed).unwrap();
    build_feature_rows(&corpus.cases, &gmm).unwrap()
}

/// Dataset over raw numeric columns with one date key per row.
pub fn dataset(x: Matrix, y: Vec<u8>) -> Dataset {
    let n = x.rows();
    let d = x.cols();
    let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    Dataset {
        row_ids: (0..n).map(|i| format!("r{i}")).collect(),
        keys: (0..n)
            .map(|i| start + chrono::Days::new(i as u64))
            .collect(),
        columns: (0..d).map(|j| format!("x{j}")).collect(),
        numeric: vec![true; d],
        x,
        y,
    }
}

/// Two overlapping Gaussian classes in `d` dimensions; class 1 is shifted by
/// `shift` along every axis.
pub fn two_class(seed: u64, n: usize, d: usize, shift: f64) -> Dataset {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut data = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let label = (i % 3 == 0) as u8;
        for _ in 0..d {
            data.push(normal.sample(&mut r) + shift * label as f64);
        }
        y.push(label);
    }
    dataset(Matrix::from_vec(n, d, data), y)
}

/// Reduced corpus and grids; a full run finishes in a few seconds.
pub const SMALL_CONFIG: &str = "\
gen.cases = 150
tsne.iterations = 1000
grid.rf.n_trees = 30
grid.rf.max_depth = none
grid.rf.class_weight = 5
grid.gbt.n_stages = 40
grid.gbt.learning_rate = 0.3
grid.gbt.max_depth = 3
grid.svm.c = 10
grid.svm.gamma = 0.1
svm.max_train_rows = 800
importance.repetitions = 2
cv.n_folds = 3
";

/// Pipeline over `workdir` with the small configuration plus `extra` lines.
pub fn small_pipeline(
    workdir: &std::path::Path,
    extra: &str,
) -> invoice_lifecycle::pipeline::Pipeline {
    let mut cfg = invoice_lifecycle::pipeline::PipelineConfig::default();
    cfg.apply_text(SMALL_CONFIG).unwrap();
    cfg.apply_text(extra).unwrap();
    cfg.set("workdir", &workdir.display().to_string()).unwrap();
    invoice_lifecycle::pipeline::Pipeline::new(cfg).unwrap()
}

/// Contract violations in an injected dataset, one message each.
pub fn injection_violations(
    ds: &invoice_lifecycle::synth::LabeledDataset,
    threshold: u64,
    f: f64,
) -> Vec<String> {
    let originals: Vec<_> = ds.rows.iter().filter(|r| r.label == 0).collect();
    let by_id: std::collections::HashMap<&str, _> = originals
        .iter()
        .map(|r| (r.row.line_id.as_str(), &r.row))
        .collect();
    let stats = invoice_lifecycle::synth::combo_counts(
        &originals.iter().map(|r| r.row.clone()).collect::<Vec<_>>(),
    );
    let globals = invoice_lifecycle::synth::flag_global_anomalies(&stats, threshold);
    let mut out = Vec::new();
    for r in ds.rows.iter().filter(|r| r.label == 1) {
        let src = by_id[r.source_line_id.as_deref().unwrap()];
        let mut same = src.clone();
        same.line_id = r.row.line_id.clone();
        same.days_since_open = r.row.days_since_open;
        same.log_days_since_open = r.row.log_days_since_open;
        same.service_date = r.row.service_date;
        if same != r.row {
            out.push(format!("{}: non-time field changed", r.row.line_id));
        }
        if r.row.log_days_since_open
            != invoice_lifecycle::featurize::log_days(r.row.days_since_open)
            || r.row.service_date
                != r.row.open_date + chrono::Days::new(r.row.days_since_open as u64)
        {
            out.push(format!("{}: inconsistent time fields", r.row.line_id));
        }
        let key = ComboKey::of(&r.row);
        if r.row.days_since_open >= stats.get(&key).unwrap().min_days {
            out.push(format!("{}: days not below combo minimum", r.row.line_id));
        }
        if globals.contains(&key) {
            out.push(format!("{}: global combo", r.row.line_id));
        }
    }
    let n = ds.rows.len() as f64;
    let realized = ds.summary.injected_rows as f64 / n;
    if (realized - f).abs() > 1.0 / n {
        out.push(format!("realized fraction {realized}"));
    }
    out
}
