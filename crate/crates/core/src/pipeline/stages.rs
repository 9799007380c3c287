use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::Datelike;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{PipelineConfig, Settings};
use super::manifest::{sha256_hex, ChainLink, RunManifest, StageContext, StageStatus};
use super::{derive_seed, PipelineError};
use crate::caseselect::{
    dbscan_embedding, embedding_csv, phase_matrix, prefilter_cases, select_suitable, svd_reduce,
    tsne_embed, ClusterUtilization, KlCheckpoint, TsneParams, NOISE,
};
use crate::evaluate::{
    chronological_split, compute_metrics, grid_search, permutation_importance, ts_cv_folds,
    ComparisonTable, ImportanceReport, MetricsReport, SplitSpec,
};
use crate::featurize::{
    billing_points, build_feature_rows, encode, fit_billing_mode_gmm, BillingModeModel,
    FeatureGroup, FeatureRow, Vocabulary,
};
use crate::ingest::{
    parse_case_manifest_str, parse_invoice_str, validate_items, write_case_manifest,
    write_invoice_rows, write_validation_report, Case, CaseHeader, Corpus, FlagKind, LineItem,
    ParsedFile,
};
use crate::learn::{train, Architecture, Dataset, ModelDocument, Prediction};
use crate::synth::{
    combo_counts, flag_global_anomalies, gen_corpus, inject_anomalies, read_dataset_csv,
    write_dataset_csv, CorpusSpec, DatasetManifest, InjectParams, LabeledRow,
};

/// Stage names in pipeline order; `run` covers `ingest` through `eval`.
pub const STAGES: [&str; 7] = [
    "gen-corpus",
    "ingest",
    "select",
    "inject",
    "train",
    "eval",
    "score",
];

const CASES_FILE: &str = "cases.txt";
const INVOICE_DIR: &str = "invoices";
const CORPUS_JSON: &str = "ingest/corpus.json";
const VALIDATION_CSV: &str = "ingest/validation.csv";
const SELECTION_JSON: &str = "select/selection.json";
const EMBEDDING_CSV: &str = "select/embedding.csv";
const GMM_JSON: &str = "inject/billing_gmm.json";
const DATASET_CSV: &str = "inject/dataset.csv";
const DATASET_JSON: &str = "inject/dataset.json";
const VOCAB_JSON: &str = "train/vocab.json";
const SPLIT_JSON: &str = "train/split.json";
const METRICS_JSON: &str = "eval/metrics.json";
const TABLE_TXT: &str = "eval/table.txt";
const TEST_TABLE_TXT: &str = "eval/test_table.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SelectionReport {
    prefiltered_cases: usize,
    svd_components: usize,
    singular_values: Vec<f64>,
    explained_variance_ratio: Vec<f64>,
    cumulative_explained: f64,
    tsne: TsneParams,
    kl_divergence: f64,
    kl_trace: Vec<KlCheckpoint>,
    n_clusters: usize,
    noise_cases: usize,
    clusters: Vec<ClusterUtilization>,
    case_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BlockSummary {
    rows: usize,
    anomalies: usize,
    first_date: String,
    last_date: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureEval {
    pub architecture: Architecture,
    pub validation: MetricsReport,
    pub test: MetricsReport,
    pub importance: ImportanceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub confidence_threshold: f64,
    /// Highest validation F1; the first listed wins ties.
    pub best_architecture: Architecture,
    pub architectures: Vec<ArchitectureEval>,
}

impl EvalSummary {
    pub fn get(&self, arch: Architecture) -> Option<&ArchitectureEval> {
        self.architectures.iter().find(|a| a.architecture == arch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub rows: usize,
    pub anomalous: usize,
}

struct Prepared {
    data: Dataset,
    split: SplitSpec,
    groups: Vec<FeatureGroup>,
    vocab: Vocabulary,
}

fn model_path(arch: Architecture) -> String {
    format!("models/{}.json", arch.as_str())
}

fn csv_string(rows: Vec<Vec<String>>, header: &[&str]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for r in rows {
        w.write_record(&r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("utf-8 csv")
}

fn predictions_csv(preds: &[Prediction], labels: Option<&[u8]>) -> String {
    let mut header = vec!["line_id"];
    if labels.is_some() {
        header.push("label");
    }
    header.extend(["class", "confidence"]);
    let rows = preds
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r = vec![p.row_id.clone()];
            if let Some(l) = labels {
                r.push(l[i].to_string());
            }
            r.push(p.class.to_string());
            r.push(p.confidence.to_string());
            r
        })
        .collect();
    csv_string(rows, &header)
}

fn block_summary(data: &Dataset, idx: &[usize]) -> BlockSummary {
    let date = |i: Option<&usize>| i.map(|&i| data.keys[i].to_string()).unwrap_or_default();
    BlockSummary {
        rows: idx.len(),
        anomalies: idx.iter().filter(|&&i| data.y[i] == 1).count(),
        first_date: date(idx.first()),
        last_date: date(idx.last()),
    }
}

/// Runs stages against one workdir with one effective configuration.
pub struct Pipeline {
    config: PipelineConfig,
    settings: Settings,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        let settings = config.resolve()?;
        Ok(Pipeline { config, settings })
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    pub fn workdir(&self) -> &Path {
        &self.settings.workdir
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.settings.workdir.join(rel)
    }

    pub fn manifest_path(&self, stage: &str) -> PathBuf {
        self.path(&format!("manifests/{stage}.json"))
    }

    pub fn model_path(&self, arch: Architecture) -> PathBuf {
        self.path(&model_path(arch))
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.settings.seed, stage)
    }

    fn write_manifest(&self, manifest: &RunManifest) -> Result<String, PipelineError> {
        let path = self.manifest_path(&manifest.stage);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))?;
        }
        let mut text =
            serde_json::to_string_pretty(manifest).map_err(|e| PipelineError::json(&path, e))?;
        text.push('\n');
        fs::write(&path, &text).map_err(|e| PipelineError::io(&path, e))?;
        Ok(sha256_hex(text.as_bytes()))
    }

    /// Runs `body` on a pool of `threads` workers and always writes the
    /// stage manifest, marking it failed when `body` errs.
    fn execute<T: Send>(
        &self,
        stage: &str,
        body: impl FnOnce(&mut StageContext) -> Result<T, PipelineError> + Send,
    ) -> Result<(T, RunManifest, String), PipelineError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.settings.threads)
            .build()
            .map_err(|e| PipelineError::Config(format!("threads: {e}")))?;
        let mut ctx = StageContext::new(&self.settings.workdir);
        let result = pool.install(|| body(&mut ctx));
        let manifest = ctx.finish(
            stage,
            self.settings.seed,
            self.stage_seed(stage),
            self.config.snapshot(),
            result.as_ref().err().map(|e| e.to_string()),
        );
        let hash = self.write_manifest(&manifest)?;
        match result {
            Ok(v) => Ok((v, manifest, hash)),
            Err(e) => Err(PipelineError::Stage {
                stage: stage.to_string(),
                source: Box::new(e),
            }),
        }
    }

    /// Writes a generated corpus into `corpus_in` in the ingest format:
    /// `cases.txt` plus one invoice file per service year.
    pub fn gen_corpus(&self) -> Result<RunManifest, PipelineError> {
        self.execute("gen-corpus", |ctx| {
            let spec = CorpusSpec {
                seed: self.stage_seed("gen-corpus"),
                ..self.settings.corpus.clone()
            };
            let corpus = gen_corpus(&spec)?;
            let dir = &self.settings.corpus_in;
            let invoices = dir.join(INVOICE_DIR);
            if invoices.is_dir() {
                for stale in invoice_files(&invoices)? {
                    fs::remove_file(&stale).map_err(|e| PipelineError::io(&stale, e))?;
                }
            }
            let headers: Vec<CaseHeader> = corpus.cases.iter().map(Case::header).collect();
            ctx.write(
                &dir.join(CASES_FILE),
                write_case_manifest(&headers).as_bytes(),
            )?;
            let mut by_year: BTreeMap<i32, Vec<&LineItem>> = BTreeMap::new();
            for item in corpus.cases.iter().flat_map(|c| &c.items) {
                by_year
                    .entry(item.service_date.year())
                    .or_default()
                    .push(item);
            }
            for (year, items) in &by_year {
                let text = write_invoice_rows(items.iter().copied());
                ctx.write(&invoices.join(format!("{year}.txt")), text.as_bytes())?;
            }
            ctx.count("cases", corpus.cases.len());
            ctx.count("items", corpus.item_count());
            ctx.count("invoice_files", by_year.len());
            Ok(())
        })
        .map(|(_, m, _)| m)
    }

    pub fn ingest(&self) -> Result<RunManifest, PipelineError> {
        self.ingest_inner().map(|(m, _)| m)
    }

    fn ingest_inner(&self) -> Result<(RunManifest, String), PipelineError> {
        self.execute("ingest", |ctx| {
            let dir = &self.settings.corpus_in;
            let cases_text = ctx.read_string(&dir.join(CASES_FILE))?;
            let headers = parse_case_manifest_str(CASES_FILE, &cases_text)?;
            let files = invoice_files(&dir.join(INVOICE_DIR))?;
            if files.is_empty() {
                return Err(PipelineError::Artifact(format!(
                    "no .txt invoice files in {}",
                    dir.join(INVOICE_DIR).display()
                )));
            }
            let mut texts = Vec::with_capacity(files.len());
            for f in &files {
                let name = format!(
                    "{INVOICE_DIR}/{}",
                    f.file_name().unwrap_or_default().to_string_lossy()
                );
                texts.push((name, ctx.read_string(f)?));
            }
            let parsed = texts
                .par_iter()
                .map(|(name, text)| {
                    Ok(ParsedFile {
                        path: name.clone(),
                        records: parse_invoice_str(name, text)?,
                    })
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let (corpus, flags) = validate_items(&parsed, &headers, Some(CASES_FILE))?;
            ctx.write_json(&self.path(CORPUS_JSON), &corpus)?;
            ctx.write(
                &self.path(VALIDATION_CSV),
                write_validation_report(&flags).as_bytes(),
            )?;
            let files = &corpus.ingest_manifest.files;
            ctx.count("cases", corpus.cases.len());
            ctx.count("records", files.iter().map(|f| f.records).sum());
            ctx.count("items", corpus.item_count());
            ctx.count("rejected", files.iter().map(|f| f.rejected).sum());
            ctx.count(
                "math_mismatch",
                flags
                    .iter()
                    .filter(|f| f.flag == FlagKind::MathMismatch)
                    .count(),
            );
            Ok(())
        })
        .map(|(_, m, h)| (m, h))
    }

    pub fn select(&self) -> Result<RunManifest, PipelineError> {
        self.select_inner().map(|(m, _)| m)
    }

    fn select_inner(&self) -> Result<(RunManifest, String), PipelineError> {
        let s = &self.settings;
        self.execute("select", |ctx| {
            let corpus: Corpus = ctx.read_json(&self.path(CORPUS_JSON))?;
            let cases = prefilter_cases(&corpus, &s.category, s.min_items, s.min_phases)?;
            let ids: Vec<String> = cases.iter().map(|c| c.case_id.clone()).collect();
            let reduced = svd_reduce(ids.clone(), &phase_matrix(&cases)?, s.variance_target)?;
            let tsne = TsneParams {
                seed: self.stage_seed("select"),
                ..s.tsne.clone()
            };
            let started = Instant::now();
            let embedding = tsne_embed(ids.clone(), &reduced.scores, &tsne)?;
            ctx.timings
                .insert("tsne_seconds".into(), started.elapsed().as_secs_f64());
            let assignment = dbscan_embedding(
                ids,
                &embedding.coordinates,
                s.dbscan_eps,
                s.dbscan_min_samples,
            );
            let selection = select_suitable(&assignment, &cases, s.utilization_threshold)?;
            let report = SelectionReport {
                prefiltered_cases: cases.len(),
                svd_components: reduced.components(),
                singular_values: reduced.singular_values.clone(),
                explained_variance_ratio: reduced.explained_variance_ratio.clone(),
                cumulative_explained: reduced.cumulative_explained(),
                tsne,
                kl_divergence: embedding.kl_divergence,
                kl_trace: embedding.kl_trace.clone(),
                n_clusters: assignment.n_clusters,
                noise_cases: assignment.labels.iter().filter(|&&l| l == NOISE).count(),
                clusters: selection.clusters,
                case_ids: selection.case_ids,
            };
            ctx.write(
                &self.path(EMBEDDING_CSV),
                embedding_csv(&embedding, &assignment).as_bytes(),
            )?;
            ctx.write_json(&self.path(SELECTION_JSON), &report)?;
            ctx.count("cases_in", corpus.cases.len());
            ctx.count("prefiltered", report.prefiltered_cases);
            ctx.count("clusters", report.n_clusters);
            ctx.count("cases_out", report.case_ids.len());
            Ok(())
        })
        .map(|(_, m, h)| (m, h))
    }

    pub fn inject(&self) -> Result<RunManifest, PipelineError> {
        self.inject_inner().map(|(m, _)| m)
    }

    fn inject_inner(&self) -> Result<(RunManifest, String), PipelineError> {
        let s = &self.settings;
        self.execute("inject", |ctx| {
            let corpus: Corpus = ctx.read_json(&self.path(CORPUS_JSON))?;
            let selection: SelectionReport = ctx.read_json(&self.path(SELECTION_JSON))?;
            let keep: BTreeSet<&str> = selection.case_ids.iter().map(String::as_str).collect();
            let cases: Vec<Case> = corpus
                .cases
                .into_iter()
                .filter(|c| keep.contains(c.case_id.as_str()))
                .collect();
            if cases.len() != keep.len() {
                return Err(PipelineError::Artifact(format!(
                    "selection lists {} cases but only {} are in the corpus",
                    keep.len(),
                    cases.len()
                )));
            }
            let gmm = fit_billing_mode_gmm(
                &billing_points(&cases),
                s.gmm_k,
                self.stage_seed("featurize"),
            )?;
            let rows = build_feature_rows(&cases, &gmm)?;
            let stats = combo_counts(&rows);
            let globals = flag_global_anomalies(&stats, s.global_threshold);
            let params = InjectParams {
                target_fraction: s.target_fraction,
                min_days_floor: s.min_days_floor,
                beta: s.beta,
                seed: s.synth_seed.unwrap_or_else(|| self.stage_seed("inject")),
            };
            let dataset = inject_anomalies(rows, &stats, &globals, &params)?;
            let mut csv = Vec::new();
            write_dataset_csv(&dataset.rows, &mut csv)?;
            ctx.write_json(&self.path(GMM_JSON), &gmm)?;
            ctx.write(&self.path(DATASET_CSV), &csv)?;
            ctx.write_json(
                &self.path(DATASET_JSON),
                &DatasetManifest::new(&dataset, s.global_threshold, &params),
            )?;
            let sum = &dataset.summary;
            ctx.count("cases", cases.len());
            ctx.count("rows", dataset.rows.len());
            ctx.count("normal_rows", sum.normal_rows);
            ctx.count("anomalies_injected", sum.injected_rows);
            ctx.count("combos", stats.len());
            ctx.count("global_combos", sum.global_combos);
            ctx.count("eligible_combos", sum.eligible_combos);
            Ok(())
        })
        .map(|(_, m, h)| (m, h))
    }

    fn prepare(
        &self,
        ctx: &mut StageContext,
        vocab: Option<Vocabulary>,
    ) -> Result<Prepared, PipelineError> {
        let bytes = ctx.read(&self.path(DATASET_CSV))?;
        let labeled: Vec<LabeledRow> = read_dataset_csv(&bytes[..])?;
        let y: Vec<u8> = labeled.iter().map(|r| r.label).collect();
        let rows: Vec<FeatureRow> = labeled.into_iter().map(|r| r.row).collect();
        let keys: Vec<_> = rows.iter().map(|r| r.service_date).collect();
        let split = chronological_split(&keys, self.settings.split_fractions)?;
        let vocab = match vocab {
            Some(v) => v,
            None => {
                let train_rows: Vec<FeatureRow> =
                    split.train.iter().map(|&i| rows[i].clone()).collect();
                Vocabulary::from_rows(&train_rows)
            }
        };
        let (encoded, _) = encode(&rows, Some(&vocab))?;
        let data = Dataset::new(&encoded, y, keys)?;
        Ok(Prepared {
            data,
            split,
            groups: encoded.groups,
            vocab,
        })
    }

    /// Grid search per architecture on expanding-window folds of the training
    /// block, then a refit of the best cell on the whole block.
    pub fn train(&self) -> Result<RunManifest, PipelineError> {
        self.train_inner().map(|(m, _)| m)
    }

    fn train_inner(&self) -> Result<(RunManifest, String), PipelineError> {
        let s = &self.settings;
        self.execute("train", |ctx| {
            let p = self.prepare(ctx, None)?;
            ctx.write_json(&self.path(VOCAB_JSON), &p.vocab)?;
            let blocks: BTreeMap<&str, BlockSummary> = [
                ("train", block_summary(&p.data, &p.split.train)),
                ("test", block_summary(&p.data, &p.split.test)),
                ("validation", block_summary(&p.data, &p.split.validation)),
            ]
            .into_iter()
            .collect();
            ctx.write_json(&self.path(SPLIT_JSON), &blocks)?;
            let folds = ts_cv_folds(&p.split.train, s.n_folds)?;
            let train_data = p.data.subset(&p.split.train);
            let seed = self.stage_seed("train");
            for &arch in &s.architectures {
                let started = Instant::now();
                let grid = grid_search(&p.data, &folds, &s.grid_cells(arch, seed))?;
                let best = &grid.cells[grid.best];
                if let Some(err) = &best.error {
                    return Err(PipelineError::Artifact(format!(
                        "every {} grid cell failed; first error: {err}",
                        arch.label()
                    )));
                }
                let model = train(&train_data, &best.params)?;
                let doc = ModelDocument::new(p.data.columns.clone(), best.params.clone(), model);
                ctx.timings.insert(
                    format!("{}_seconds", arch.as_str()),
                    started.elapsed().as_secs_f64(),
                );
                ctx.write_json(
                    &self.path(&format!("train/grid_{}.json", arch.as_str())),
                    &grid,
                )?;
                let mut text = doc.to_json()?;
                text.push('\n');
                ctx.write(&self.model_path(arch), text.as_bytes())?;
            }
            ctx.count("rows", p.data.len());
            ctx.count("train_rows", p.split.train.len());
            ctx.count("features", p.data.columns.len());
            ctx.count("architectures", s.architectures.len());
            Ok(())
        })
        .map(|(_, m, h)| (m, h))
    }

    /// Validation and test metrics, comparison tables and permutation
    /// importance for every trained architecture.
    pub fn eval(&self) -> Result<EvalSummary, PipelineError> {
        self.eval_inner().map(|(e, _, _)| e)
    }

    fn eval_inner(&self) -> Result<(EvalSummary, RunManifest, String), PipelineError> {
        let s = &self.settings;
        self.execute("eval", |ctx| {
            let vocab: Vocabulary = ctx.read_json(&self.path(VOCAB_JSON))?;
            let p = self.prepare(ctx, Some(vocab))?;
            let validation = p.data.subset(&p.split.validation);
            let test = p.data.subset(&p.split.test);
            let seed = self.stage_seed("eval");
            let mut evals = Vec::new();
            for &arch in &s.architectures {
                let doc = ModelDocument::from_json(&ctx.read_string(&self.model_path(arch))?)?;
                let val_preds =
                    doc.predict(&validation.row_ids, &validation.columns, &validation.x)?;
                let test_preds = doc.predict(&test.row_ids, &test.columns, &test.x)?;
                let importance = permutation_importance(
                    &doc.model,
                    &validation,
                    &p.groups,
                    s.importance_repetitions,
                    seed,
                );
                ctx.write(
                    &self.path(&format!("eval/importance_{}.csv", arch.as_str())),
                    importance.to_csv().as_bytes(),
                )?;
                ctx.write(
                    &self.path(&format!("eval/predictions_{}.csv", arch.as_str())),
                    predictions_csv(&val_preds, Some(&validation.y)).as_bytes(),
                )?;
                evals.push(ArchitectureEval {
                    architecture: arch,
                    validation: compute_metrics(&val_preds, &validation.y, s.confidence_threshold)?,
                    test: compute_metrics(&test_preds, &test.y, s.confidence_threshold)?,
                    importance,
                });
            }
            let mut best = 0;
            for (i, e) in evals.iter().enumerate() {
                if e.validation.f1 > evals[best].validation.f1 {
                    best = i;
                }
            }
            let summary = EvalSummary {
                confidence_threshold: s.confidence_threshold,
                best_architecture: evals[best].architecture,
                architectures: evals,
            };
            let table = |f: fn(&ArchitectureEval) -> &MetricsReport| {
                let reports: Vec<(String, MetricsReport)> = summary
                    .architectures
                    .iter()
                    .map(|e| (e.architecture.label().to_string(), f(e).clone()))
                    .collect();
                ComparisonTable::from_reports(&reports).render()
            };
            ctx.write(&self.path(TABLE_TXT), table(|e| &e.validation).as_bytes())?;
            ctx.write(&self.path(TEST_TABLE_TXT), table(|e| &e.test).as_bytes())?;
            ctx.write_json(&self.path(METRICS_JSON), &summary)?;
            ctx.count("validation_rows", validation.len());
            ctx.count("test_rows", test.len());
            Ok(summary)
        })
    }

    /// `ingest`, `select`, `inject`, `train` and `eval` in order. The `run`
    /// manifest chains the hash of every stage manifest written.
    pub fn run(&self) -> Result<EvalSummary, PipelineError> {
        let mut ctx = StageContext::new(&self.settings.workdir);
        let mut chain = Vec::new();
        let mut link = |stage: &str, r: Result<(RunManifest, String), PipelineError>| {
            let out = r.map(|(m, hash)| {
                for (k, v) in &m.counts {
                    ctx.counts.insert(format!("{stage}.{k}"), *v);
                }
                for (k, v) in &m.timings {
                    ctx.timings.insert(format!("{stage}.{k}"), *v);
                }
                ctx.timings
                    .insert(format!("{stage}.seconds"), m.elapsed_seconds);
                hash
            });
            let (status, manifest_sha256) = match &out {
                Ok(h) => (StageStatus::Ok, h.clone()),
                Err(_) => (
                    StageStatus::Failed,
                    fs::read(self.manifest_path(stage))
                        .map(|b| sha256_hex(&b))
                        .unwrap_or_default(),
                ),
            };
            chain.push(ChainLink {
                stage: stage.to_string(),
                status,
                manifest_sha256,
            });
            out.map(|_| ())
        };
        let result = link("ingest", self.ingest_inner())
            .and_then(|_| link("select", self.select_inner()))
            .and_then(|_| link("inject", self.inject_inner()))
            .and_then(|_| link("train", self.train_inner()))
            .and_then(|_| {
                let mut summary = None;
                link(
                    "eval",
                    self.eval_inner().map(|(e, m, h)| {
                        summary = Some(e);
                        (m, h)
                    }),
                )?;
                Ok(summary.expect("eval succeeded"))
            });
        let mut manifest = ctx.finish(
            "run",
            self.settings.seed,
            self.settings.seed,
            self.config.snapshot(),
            result.as_ref().err().map(|e| e.to_string()),
        );
        manifest.chain = chain;
        self.write_manifest(&manifest)?;
        result
    }

    /// Scores new items with a trained model and the frozen vocabulary.
    ///
    /// `input` is either a dataset CSV (already featurized) or an invoice file,
    /// which is featurized with the persisted billing-mode mixture and the case
    /// manifest at `cases` (default: `<corpus_in>/cases.txt`).
    pub fn score(
        &self,
        model: &Path,
        input: &Path,
        cases: Option<&Path>,
        out: &Path,
    ) -> Result<ScoreSummary, PipelineError> {
        self.execute("score", |ctx| {
            let doc = ModelDocument::from_json(&ctx.read_string(model)?)?;
            let vocab: Vocabulary = ctx.read_json(&self.path(VOCAB_JSON))?;
            let text = ctx.read_string(input)?;
            let first = text.lines().next().unwrap_or_default();
            let rows: Vec<FeatureRow> = if first.contains('|') {
                let gmm: BillingModeModel = ctx.read_json(&self.path(GMM_JSON))?;
                let cases_path = cases
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| self.settings.corpus_in.join(CASES_FILE));
                let headers = parse_case_manifest_str(
                    &cases_path.display().to_string(),
                    &ctx.read_string(&cases_path)?,
                )?;
                let name = input.display().to_string();
                let parsed = ParsedFile {
                    records: parse_invoice_str(&name, &text)?,
                    path: name,
                };
                let (corpus, _) = validate_items(&[parsed], &headers, None)?;
                let cases: Vec<Case> = corpus
                    .cases
                    .into_iter()
                    .filter(|c| !c.items.is_empty())
                    .collect();
                build_feature_rows(&cases, &gmm)?
            } else {
                read_dataset_csv(text.as_bytes())?
                    .into_iter()
                    .map(|r| r.row)
                    .collect()
            };
            if rows.is_empty() {
                return Err(PipelineError::Artifact(format!(
                    "{} has no rows to score",
                    input.display()
                )));
            }
            let (encoded, _) = encode(&rows, Some(&vocab))?;
            let preds = doc.predict(&encoded.row_ids, &encoded.columns, &encoded.matrix)?;
            ctx.write(out, predictions_csv(&preds, None).as_bytes())?;
            let anomalous = preds.iter().filter(|p| p.class == 1).count();
            ctx.count("rows", preds.len());
            ctx.count("anomalous", anomalous);
            Ok(ScoreSummary {
                rows: preds.len(),
                anomalous,
            })
        })
        .map(|(s, _, _)| s)
    }
}

/// `.txt` files directly inside `dir`, sorted by name.
fn invoice_files(dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    let entries = fs::read_dir(dir).map_err(|e| PipelineError::io(dir, e))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|x| x == "txt") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}
