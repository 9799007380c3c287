use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::PipelineError;
use crate::caseselect::{TsneInit, TsneParams};
use crate::evaluate::GridSpec;
use crate::learn::{Architecture, ForestParams, GbtParams, Kernel, ModelParams, SvmParams};
use crate::synth::CorpusSpec;

/// Every accepted key with its default and a one-line description.
pub const CONFIG_KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "global seed; stage seeds derive from it"),
    ("workdir", "work", "directory for all artifacts"),
    (
        "corpus_in",
        "",
        "corpus directory (default: <workdir>/corpus)",
    ),
    ("architectures", "rf,gbt,svm", "models to train"),
    ("threads", "0", "worker threads (0 = all cores)"),
    ("gen.cases", "360", "cases to generate"),
    ("gen.items_min", "150", "minimum items per full case"),
    ("gen.items_max", "300", "maximum items per full case"),
    (
        "gen.other_category_fraction",
        "0.12",
        "share of non-litigation cases",
    ),
    (
        "gen.flat_fee_fraction",
        "0.05",
        "share of flat-fee litigation cases",
    ),
    (
        "gen.sparse_fraction",
        "0.08",
        "share of sparse litigation cases",
    ),
    ("gen.expense_fraction", "0.08", "share of expense items"),
    (
        "gen.math_error_rate",
        "0.002",
        "share of fee items with a total mismatch",
    ),
    (
        "gen.open_window_days",
        "3650",
        "days over which case open dates spread",
    ),
    ("gmm.k", "2", "billing-mode mixture components"),
    ("prefilter.category", "Litigation", "case category to model"),
    ("prefilter.min_items", "20", "minimum items per case"),
    (
        "prefilter.min_phases",
        "3",
        "minimum litigation phases per case",
    ),
    ("svd.variance_target", "0.95", "explained variance to keep"),
    ("tsne.perplexity", "25", "t-SNE perplexity"),
    ("tsne.learning_rate", "50", "t-SNE learning rate"),
    ("tsne.iterations", "10000", "t-SNE gradient steps"),
    ("tsne.init", "pca", "t-SNE initialization (pca or random)"),
    ("dbscan.eps", "4.5", "DBSCAN neighborhood radius"),
    (
        "dbscan.min_samples",
        "10",
        "DBSCAN core-point neighborhood size",
    ),
    (
        "select.utilization_threshold",
        "0.6",
        "median phase utilization for a suitable cluster",
    ),
    (
        "synth.threshold",
        "25",
        "combinations rarer than this are global anomalies",
    ),
    (
        "synth.target_fraction",
        "0.05",
        "share of injected rows in the dataset",
    ),
    (
        "synth.beta",
        "0.25",
        "injected days are below beta * combo minimum",
    ),
    (
        "synth.min_days_floor",
        "60",
        "combos first seen earlier are not injected",
    ),
    ("synth.seed", "", "injection seed (default: derived)"),
    (
        "split.fractions",
        "0.6,0.2,0.2",
        "train, test and validation shares",
    ),
    ("cv.n_folds", "5", "expanding-window folds"),
    ("eval.confidence_threshold", "0.9", "coverage threshold"),
    (
        "importance.repetitions",
        "5",
        "permutations per feature group",
    ),
    ("rf.min_leaf", "1", "forest minimum leaf size"),
    (
        "rf.m_features",
        "auto",
        "features per split (auto = ceil(sqrt(d)))",
    ),
    ("rf.bootstrap", "true", "bootstrap rows per tree"),
    ("rf.max_bins", "256", "histogram bins per feature"),
    ("gbt.min_leaf", "1", "boosted tree minimum leaf size"),
    (
        "gbt.class_weight",
        "1",
        "weight of anomalous rows in the loss",
    ),
    ("gbt.max_bins", "256", "histogram bins per feature"),
    ("svm.kernel", "rbf", "rbf or linear"),
    (
        "svm.class_weight",
        "1",
        "multiplier of C for anomalous rows",
    ),
    ("svm.tolerance", "0.001", "KKT violation tolerance"),
    ("svm.max_train_rows", "2500", "stratified subsample cap"),
    ("svm.platt_folds", "3", "folds for out-of-fold calibration"),
    ("grid.rf.n_trees", "100,300", "forest grid: trees"),
    ("grid.rf.max_depth", "none,16", "forest grid: depth limit"),
    (
        "grid.rf.class_weight",
        "1,5",
        "forest grid: anomalous-class weight",
    ),
    ("grid.gbt.n_stages", "100,300", "boosting grid: stages"),
    (
        "grid.gbt.learning_rate",
        "0.1,0.3",
        "boosting grid: shrinkage",
    ),
    ("grid.gbt.max_depth", "2,3", "boosting grid: tree depth"),
    ("grid.svm.c", "1,10,100", "SVM grid: C"),
    ("grid.svm.gamma", "0.01,0.1,1", "SVM grid: RBF gamma"),
];

/// Raw `key = value` settings over the defaults in [`CONFIG_KEYS`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    values: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            values: CONFIG_KEYS
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl PipelineConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), PipelineError> {
        let key = key.trim();
        match self.values.get_mut(key) {
            Some(v) => {
                *v = value.trim().to_string();
                Ok(())
            }
            None => Err(PipelineError::Config(format!("unknown key '{key}'"))),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<(), PipelineError> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                PipelineError::Config(format!("line {}: expected key = value", n + 1))
            })?;
            self.set(k, v)
                .map_err(|e| PipelineError::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        self.apply_text(&text)
    }

    /// Effective settings in key order.
    pub fn snapshot(&self) -> BTreeMap<String, String> {
        self.values.clone()
    }

    pub fn resolve(&self) -> Result<Settings, PipelineError> {
        Settings::from_config(self)
    }
}

fn parse<T: FromStr>(cfg: &PipelineConfig, key: &str) -> Result<T, PipelineError>
where
    T::Err: std::fmt::Display,
{
    let raw = cfg.get(key).unwrap_or_default();
    raw.parse::<T>()
        .map_err(|e| PipelineError::Config(format!("{key} = '{raw}': {e}")))
}

fn parse_list<T: FromStr>(cfg: &PipelineConfig, key: &str) -> Result<Vec<T>, PipelineError>
where
    T::Err: std::fmt::Display,
{
    let raw = cfg.get(key).unwrap_or_default();
    let out = raw
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|e| PipelineError::Config(format!("{key} = '{raw}': {e}")))
        })
        .collect::<Result<Vec<T>, _>>()?;
    if out.is_empty() {
        return Err(PipelineError::Config(format!("{key} is empty")));
    }
    Ok(out)
}

fn parse_depths(cfg: &PipelineConfig, key: &str) -> Result<Vec<Option<usize>>, PipelineError> {
    let raw = cfg.get(key).unwrap_or_default();
    raw.split(',')
        .map(|s| match s.trim() {
            "none" => Ok(None),
            v => v
                .parse::<usize>()
                .map(Some)
                .map_err(|e| PipelineError::Config(format!("{key} = '{raw}': {e}"))),
        })
        .collect()
}

/// Typed, validated view of a [`PipelineConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub seed: u64,
    pub workdir: PathBuf,
    pub corpus_in: PathBuf,
    pub architectures: Vec<Architecture>,
    pub threads: usize,
    pub corpus: CorpusSpec,
    pub gmm_k: usize,
    pub category: String,
    pub min_items: usize,
    pub min_phases: usize,
    pub variance_target: f64,
    pub tsne: TsneParams,
    pub dbscan_eps: f64,
    pub dbscan_min_samples: usize,
    pub utilization_threshold: f64,
    pub global_threshold: u64,
    pub target_fraction: f64,
    pub beta: f64,
    pub min_days_floor: u32,
    pub synth_seed: Option<u64>,
    pub split_fractions: [f64; 3],
    pub n_folds: usize,
    pub confidence_threshold: f64,
    pub importance_repetitions: usize,
    pub rf: ForestParams,
    pub gbt: GbtParams,
    pub svm: SvmParams,
    pub grid: GridSpec,
}

impl Settings {
    fn from_config(cfg: &PipelineConfig) -> Result<Self, PipelineError> {
        let workdir = PathBuf::from(cfg.get("workdir").unwrap_or("work"));
        let corpus_in = match cfg.get("corpus_in").unwrap_or("") {
            "" => workdir.join("corpus"),
            p => PathBuf::from(p),
        };
        let architectures = {
            let raw = cfg.get("architectures").unwrap_or_default();
            let mut v = Vec::new();
            for a in raw.split(',').filter(|s| !s.trim().is_empty()) {
                let a: Architecture = a.parse().map_err(PipelineError::Config)?;
                if !v.contains(&a) {
                    v.push(a);
                }
            }
            if v.is_empty() {
                return Err(PipelineError::Config("architectures is empty".into()));
            }
            v.sort();
            v
        };
        let split: Vec<f64> = parse_list(cfg, "split.fractions")?;
        let split_fractions: [f64; 3] = split
            .try_into()
            .map_err(|_| PipelineError::Config("split.fractions needs three values".into()))?;
        let synth_seed = match cfg.get("synth.seed").unwrap_or("") {
            "" => None,
            _ => Some(parse(cfg, "synth.seed")?),
        };
        let m_features = match cfg.get("rf.m_features").unwrap_or("auto") {
            "auto" => None,
            _ => Some(parse(cfg, "rf.m_features")?),
        };
        let kernel = match cfg.get("svm.kernel").unwrap_or("rbf") {
            "rbf" => Kernel::Rbf { gamma: 0.1 },
            "linear" => Kernel::Linear,
            other => {
                return Err(PipelineError::Config(format!(
                    "svm.kernel = '{other}': expected rbf or linear"
                )))
            }
        };
        let s = Settings {
            seed: parse(cfg, "seed")?,
            workdir,
            corpus_in,
            architectures,
            threads: parse(cfg, "threads")?,
            corpus: CorpusSpec {
                n_cases: parse(cfg, "gen.cases")?,
                items_min: parse(cfg, "gen.items_min")?,
                items_max: parse(cfg, "gen.items_max")?,
                seed: 0,
                other_category_fraction: parse(cfg, "gen.other_category_fraction")?,
                flat_fee_fraction: parse(cfg, "gen.flat_fee_fraction")?,
                sparse_fraction: parse(cfg, "gen.sparse_fraction")?,
                expense_fraction: parse(cfg, "gen.expense_fraction")?,
                math_error_rate: parse(cfg, "gen.math_error_rate")?,
                open_window_days: parse(cfg, "gen.open_window_days")?,
                ..CorpusSpec::default()
            },
            gmm_k: parse(cfg, "gmm.k")?,
            category: cfg
                .get("prefilter.category")
                .unwrap_or_default()
                .to_string(),
            min_items: parse(cfg, "prefilter.min_items")?,
            min_phases: parse(cfg, "prefilter.min_phases")?,
            variance_target: parse(cfg, "svd.variance_target")?,
            tsne: TsneParams {
                perplexity: parse(cfg, "tsne.perplexity")?,
                learning_rate: parse(cfg, "tsne.learning_rate")?,
                iterations: parse(cfg, "tsne.iterations")?,
                init: parse::<TsneInit>(cfg, "tsne.init")?,
                ..TsneParams::default()
            },
            dbscan_eps: parse(cfg, "dbscan.eps")?,
            dbscan_min_samples: parse(cfg, "dbscan.min_samples")?,
            utilization_threshold: parse(cfg, "select.utilization_threshold")?,
            global_threshold: parse(cfg, "synth.threshold")?,
            target_fraction: parse(cfg, "synth.target_fraction")?,
            beta: parse(cfg, "synth.beta")?,
            min_days_floor: parse(cfg, "synth.min_days_floor")?,
            synth_seed,
            split_fractions,
            n_folds: parse(cfg, "cv.n_folds")?,
            confidence_threshold: parse(cfg, "eval.confidence_threshold")?,
            importance_repetitions: parse(cfg, "importance.repetitions")?,
            rf: ForestParams {
                min_leaf: parse(cfg, "rf.min_leaf")?,
                m_features,
                bootstrap: parse(cfg, "rf.bootstrap")?,
                max_bins: parse(cfg, "rf.max_bins")?,
                ..ForestParams::default()
            },
            gbt: GbtParams {
                min_leaf: parse(cfg, "gbt.min_leaf")?,
                class_weight: parse(cfg, "gbt.class_weight")?,
                max_bins: parse(cfg, "gbt.max_bins")?,
                ..GbtParams::default()
            },
            svm: SvmParams {
                kernel,
                class_weight: parse(cfg, "svm.class_weight")?,
                tolerance: parse(cfg, "svm.tolerance")?,
                max_train_rows: parse(cfg, "svm.max_train_rows")?,
                platt_folds: parse(cfg, "svm.platt_folds")?,
                ..SvmParams::default()
            },
            grid: GridSpec {
                rf_n_trees: parse_list(cfg, "grid.rf.n_trees")?,
                rf_max_depth: parse_depths(cfg, "grid.rf.max_depth")?,
                rf_class_weight: parse_list(cfg, "grid.rf.class_weight")?,
                gbt_n_stages: parse_list(cfg, "grid.gbt.n_stages")?,
                gbt_learning_rate: parse_list(cfg, "grid.gbt.learning_rate")?,
                gbt_max_depth: parse_list(cfg, "grid.gbt.max_depth")?,
                svm_c: parse_list(cfg, "grid.svm.c")?,
                svm_gamma: parse_list(cfg, "grid.svm.gamma")?,
            },
        };
        s.corpus
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if s.n_folds < 2 {
            return Err(PipelineError::Config("cv.n_folds must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&s.confidence_threshold) {
            return Err(PipelineError::Config(
                "eval.confidence_threshold must lie in [0, 1]".into(),
            ));
        }
        Ok(s)
    }

    /// Grid cells for `arch`, seeded for the training stage.
    pub fn grid_cells(&self, arch: Architecture, seed: u64) -> Vec<ModelParams> {
        let base = match arch {
            Architecture::Rf => ModelParams::Rf(ForestParams {
                seed,
                ..self.rf.clone()
            }),
            Architecture::Gbt => ModelParams::Gbt(self.gbt.clone()),
            Architecture::Svm => ModelParams::Svm(SvmParams {
                seed,
                ..self.svm.clone()
            }),
        };
        self.grid.cells(&base)
    }
}
