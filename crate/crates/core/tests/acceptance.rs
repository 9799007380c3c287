//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines are always printed.

mod common;

use std::collections::BTreeMap;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use chrono::{Days, NaiveDate};
use invoice_lifecycle::caseselect::{dbscan, svd_reduce, TsneInit};
use invoice_lifecycle::evaluate::{
    chronological_split, compute_metrics, ts_cv_folds, ComparisonTable, MetricsReport,
};
use invoice_lifecycle::featurize::{
    fit_billing_mode_gmm, fit_billing_mode_gmm_with, GmmOptions, Point2,
};
use invoice_lifecycle::learn::{
    grow_tree, smo, train_gbt, Architecture, Binned, GbtParams, Kernel, Node, Prediction, Targets,
    TreeParams,
};
use invoice_lifecycle::matrix::Matrix;
use invoice_lifecycle::pipeline::{Pipeline, PipelineConfig, RunManifest};
use invoice_lifecycle::synth::{
    combo_counts, flag_global_anomalies, inject_anomalies, InjectParams,
};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use common::*;

type Outcome = Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

struct ScaledRun {
    _dir: tempfile::TempDir,
    pipeline: Pipeline,
    summary: invoice_lifecycle::pipeline::EvalSummary,
    total_seconds: f64,
}

fn scaled_run() -> Result<ScaledRun, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.set("workdir", &dir.path().display().to_string())
        .map_err(|e| e.to_string())?;
    let pipeline = Pipeline::new(cfg).map_err(|e| e.to_string())?;
    let started = Instant::now();
    pipeline.gen_corpus().map_err(|e| format!("{e:#}"))?;
    let summary = pipeline.run().map_err(|e| format!("{e:#}"))?;
    Ok(ScaledRun {
        _dir: dir,
        pipeline,
        summary,
        total_seconds: started.elapsed().as_secs_f64(),
    })
}

fn criterion_1(run: &Result<ScaledRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let s = run.pipeline.settings();
    check(
        s.target_fraction == 0.05
            && s.global_threshold == 25
            && s.variance_target == 0.95
            && s.tsne.perplexity == 25.0
            && s.tsne.learning_rate == 50.0
            && s.tsne.iterations == 10_000
            && s.tsne.init == TsneInit::Pca
            && s.dbscan_eps == 4.5
            && s.dbscan_min_samples == 10,
        || "configuration differs from the required hyperparameters".into(),
    )?;
    let ingest =
        RunManifest::read(&run.pipeline.manifest_path("ingest")).map_err(|e| e.to_string())?;
    let (cases, items) = (ingest.counts["cases"], ingest.counts["items"]);
    check(cases >= 300 && items >= 60_000, || {
        format!("corpus too small: {cases} cases, {items} items")
    })?;
    let select =
        RunManifest::read(&run.pipeline.manifest_path("select")).map_err(|e| e.to_string())?;
    let tsne = select.timings["tsne_seconds"];
    let rest = run.total_seconds - tsne;
    check(tsne <= 1800.0, || format!("t-SNE took {tsne:.1}s"))?;
    check(rest <= 900.0, || {
        format!("pipeline took {rest:.1}s excluding t-SNE")
    })?;
    let mut f1 = Vec::new();
    for e in &run.summary.architectures {
        f1.push(format!(
            "{} {:.4}",
            e.architecture.as_str(),
            e.validation.f1
        ));
        check(e.validation.f1 >= 0.80, || {
            format!(
                "{} validation F1 {:.4} < 0.80",
                e.architecture.as_str(),
                e.validation.f1
            )
        })?;
    }
    check(run.summary.architectures.len() == 3, || {
        "missing architectures".into()
    })?;
    Ok(format!(
        "{cases} cases, {items} items; F1 {}; {rest:.0}s excluding t-SNE ({tsne:.1}s)",
        f1.join(", ")
    ))
}

fn criterion_2(run: &Result<ScaledRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let best = run.summary.best_architecture;
    let e = run.summary.get(best).ok_or("best architecture missing")?;
    check(run.summary.confidence_threshold == 0.9, || {
        "threshold is not 0.9".into()
    })?;
    check(e.validation.coverage >= 0.90, || {
        format!(
            "{} coverage {:.4} < 0.90",
            best.as_str(),
            e.validation.coverage
        )
    })?;
    Ok(format!(
        "best {} coverage {:.4}",
        best.as_str(),
        e.validation.coverage
    ))
}

fn criterion_3() -> Outcome {
    let mut injected = 0;
    for seed in 0..50u64 {
        let rows = feature_rows(1000 + seed, 60);
        let stats = combo_counts(&rows);
        let globals = flag_global_anomalies(&stats, 25);
        let params = InjectParams {
            target_fraction: 0.05,
            seed,
            ..InjectParams::default()
        };
        let ds = inject_anomalies(rows, &stats, &globals, &params).map_err(|e| e.to_string())?;
        injected += ds.summary.injected_rows;
        let v = injection_violations(&ds, 25, 0.05);
        check(v.is_empty(), || format!("seed {seed}: {}", v.join("; ")))?;
    }
    Ok(format!("50 runs, {injected} injected rows, 0 violations"))
}

fn criterion_4() -> Outcome {
    for seed in 0..10 {
        let pts = blob_points(seed, 200);
        for (eps, min) in [(0.5, 5), (0.8, 10), (0.3, 3)] {
            let (labels, _) = dbscan(&Matrix::from_rows(&pts), eps, min);
            check(
                same_partition(&labels, &brute_force_dbscan(&pts, eps, min)),
                || format!("DBSCAN seed {seed} eps {eps} min {min}"),
            )?;
        }
    }
    for seed in 0..12 {
        let m = random_matrix(seed, 40 + seed as usize * 7, 3 + (seed as usize % 6));
        let oracle = covariance_explained_ratios(&m);
        let r = svd_reduce(vec![String::new(); m.rows()], &m, 1.0).map_err(|e| e.to_string())?;
        for (a, b) in r.explained_variance_ratio.iter().zip(&oracle) {
            check((a - b).abs() <= 1e-8, || {
                format!("SVD seed {seed}: {a} vs {b}")
            })?;
        }
    }
    let mut r = rng(4);
    for case in 0..200 {
        let (n, d) = (r.gen_range(8..60), r.gen_range(1..5));
        let x = Matrix::from_vec(
            n,
            d,
            (0..n * d)
                .map(|_| r.gen_range(0..40) as f64 / 4.0)
                .collect(),
        );
        let y: Vec<u8> = (0..n).map(|_| r.gen_bool(0.4) as u8).collect();
        let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let tree = grow_tree(
            &Binned::new(&x, 256),
            &Targets {
                count: &vec![1; n],
                weight: &vec![1.0; n],
                y: &yf,
                classification: true,
            },
            &TreeParams {
                max_depth: Some(1),
                min_leaf: 1,
                m_features: None,
            },
            &mut rng(0),
        );
        let got = match tree.nodes[0] {
            Node::Split {
                feature, threshold, ..
            } => Some((feature, threshold)),
            Node::Leaf { .. } => None,
        };
        check(got == exhaustive_root_split(&x, &y), || {
            format!("CART case {case}")
        })?;
    }
    let x = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]);
    let sol = smo(
        &x,
        &[1.0, -1.0],
        &[10.0, 10.0],
        Kernel::Linear,
        1e-9,
        1000,
        100,
    );
    check(
        (sol.alpha[0] - 0.5).abs() <= 1e-6
            && (sol.alpha[1] - 0.5).abs() <= 1e-6
            && sol.rho.abs() <= 1e-6,
        || format!("SMO two-point alpha {:?} b {}", sol.alpha, -sol.rho),
    )?;
    for seed in 0..50 {
        let mut r = rng(seed);
        let n = r.gen_range(5..200);
        let pts: Vec<Point2> = (0..n)
            .map(|_| {
                let a: f64 = r.gen_range(0.0..8.0);
                [a, 0.5 * a + r.gen_range(-1.0..1.0)]
            })
            .collect();
        let opts = GmmOptions {
            regularization: 0.0,
            ..GmmOptions::default()
        };
        let m = fit_billing_mode_gmm_with(&pts, 1, seed, opts).map_err(|e| e.to_string())?;
        let nf = n as f64;
        let mean = [
            pts.iter().map(|p| p[0]).sum::<f64>() / nf,
            pts.iter().map(|p| p[1]).sum::<f64>() / nf,
        ];
        for a in 0..2 {
            check((m.means[0][a] - mean[a]).abs() <= 1e-9, || {
                format!("GMM mean seed {seed}")
            })?;
            for b in 0..2 {
                let cov = pts
                    .iter()
                    .map(|p| (p[a] - mean[a]) * (p[b] - mean[b]))
                    .sum::<f64>()
                    / nf;
                check((m.covariances[0][a][b] - cov).abs() <= 1e-9, || {
                    format!("GMM covariance seed {seed}")
                })?;
            }
        }
    }
    for seed in 0..4 {
        let rows = feature_rows(seed, 40);
        check(
            combo_counts(&rows).combos == two_pass_combo_stats(&rows),
            || format!("combo stats seed {seed}"),
        )?;
    }
    Ok("DBSCAN 30 sets, SVD 12, CART 200, SMO 2-point, GMM 50, combos 4".into())
}

fn criterion_5() -> Outcome {
    let noise = Normal::new(0.0, 0.4).unwrap();
    for seed in 0..20 {
        let mut r = rng(seed);
        let pts: Vec<Point2> = (0..400)
            .map(|_| {
                let c = [[1.0, 2.0], [4.0, 6.0], [5.0, 1.0]][r.gen_range(0..3)];
                [c[0] + noise.sample(&mut r), c[1] + noise.sample(&mut r)]
            })
            .collect();
        for k in [2, 3, 4] {
            let m = fit_billing_mode_gmm(&pts, k, seed).map_err(|e| e.to_string())?;
            for w in m.log_likelihood_trace.windows(2) {
                check(w[1] >= w[0] - 1e-9, || {
                    format!("EM seed {seed} k {k}: {} -> {}", w[0], w[1])
                })?;
            }
        }
    }
    for seed in 0..8 {
        let data = two_class(seed, 300, 3, 1.2);
        let m = train_gbt(
            &data,
            &GbtParams {
                n_stages: 60,
                learning_rate: 0.3,
                max_depth: 3,
                ..GbtParams::default()
            },
        )
        .map_err(|e| e.to_string())?;
        for w in m.train_log_loss.windows(2) {
            check(w[1] <= w[0], || {
                format!("GBT seed {seed}: {} -> {}", w[0], w[1])
            })?;
        }
    }
    for seed in 0..6 {
        let data = two_class(seed, 200, 4, 0.8);
        let y: Vec<f64> = data
            .y
            .iter()
            .map(|&v| if v == 1 { 1.0 } else { -1.0 })
            .collect();
        for (kernel, c) in [(Kernel::Rbf { gamma: 0.5 }, 1.0), (Kernel::Linear, 10.0)] {
            let sol = smo(&data.x, &y, &vec![c; y.len()], kernel, 1e-3, 100_000, 1000);
            for w in sol.objective_trace.windows(2) {
                check(w[1] >= w[0] - 1e-9, || {
                    format!("SMO seed {seed}: {} -> {}", w[0], w[1])
                })?;
            }
        }
    }
    Ok("EM 20 seeds x 3 k, GBT 8 seeds, SMO 6 seeds x 2 kernels".into())
}

fn criterion_6() -> Outcome {
    let start = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    let mut checked = 0usize;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let n = r.gen_range(30..2000);
        let span = r.gen_range(1..400);
        let keys: Vec<NaiveDate> = (0..n)
            .map(|_| start + Days::new(r.gen_range(0..span)))
            .collect();
        let s = chronological_split(&keys, [0.6, 0.2, 0.2]).map_err(|e| e.to_string())?;
        let max = |idx: &[usize]| idx.iter().map(|&i| keys[i]).max().unwrap();
        let min = |idx: &[usize]| idx.iter().map(|&i| keys[i]).min().unwrap();
        check(
            max(&s.train) <= min(&s.test) && max(&s.test) <= min(&s.validation),
            || format!("split seed {seed}"),
        )?;
        let folds = ts_cv_folds(&s.train, 2 + seed as usize % 5).map_err(|e| e.to_string())?;
        for f in &folds {
            check(max(&f.fit) <= min(&f.eval), || format!("fold seed {seed}"))?;
        }
        checked += 2 + folds.len();
    }
    Ok(format!(
        "100 constructions, {checked} fit/eval pairs, 0 violations"
    ))
}

fn artifacts(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for dir in ["eval", "models", "train", "inject", "select"] {
        let mut entries: Vec<_> = std::fs::read_dir(root.join(dir))
            .map(|rd| rd.map(|e| e.unwrap().path()).collect())
            .unwrap_or_default();
        entries.sort();
        for p in entries {
            out.insert(
                format!("{dir}/{}", p.file_name().unwrap().to_string_lossy()),
                std::fs::read(&p).unwrap(),
            );
        }
    }
    out
}

fn criterion_7() -> Outcome {
    let run = |threads: &str| -> Result<(tempfile::TempDir, BTreeMap<String, Vec<u8>>), String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let p = small_pipeline(dir.path(), &format!("threads = {threads}\n"));
        p.gen_corpus().map_err(|e| format!("{e:#}"))?;
        p.run().map_err(|e| format!("{e:#}"))?;
        let files = artifacts(dir.path());
        Ok((dir, files))
    };
    let (_a, one) = run("1")?;
    let (_b, four) = run("4")?;
    let (_c, again) = run("1")?;
    check(one.keys().any(|k| k.starts_with("models/")), || {
        "no model files".into()
    })?;
    for (name, bytes) in &one {
        check(four.get(name) == Some(bytes), || {
            format!("{name} differs between 1 and 4 workers")
        })?;
        check(again.get(name) == Some(bytes), || {
            format!("{name} differs between repeated runs")
        })?;
    }
    check(one.len() == four.len(), || "artifact sets differ".into())?;
    Ok(format!(
        "{} artifacts identical across 3 runs (1, 4, 1 workers)",
        one.len()
    ))
}

fn criterion_8(run: &Result<ScaledRun, String>) -> Outcome {
    let run = run.as_ref().map_err(Clone::clone)?;
    let rf = run.summary.get(Architecture::Rf).ok_or("forest missing")?;
    let rank = rf.importance.rank_of("log_days_since_open");
    let top = rf
        .importance
        .entries
        .first()
        .map(|e| e.feature.clone())
        .unwrap_or_default();
    check(rank == Some(1), || {
        format!("log_days_since_open rank {rank:?}, first is {top}")
    })?;
    Ok(format!(
        "log_days_since_open rank 1 (drop {:.4})",
        rf.importance.entries[0].mean_drop
    ))
}

fn criterion_9() -> Outcome {
    let mut preds = Vec::new();
    let mut labels = Vec::new();
    for (n, class, label) in [(10, 1, 1), (2, 1, 0), (3, 0, 1), (85, 0, 0)] {
        for _ in 0..n {
            preds.push(Prediction {
                row_id: String::new(),
                class,
                confidence: 0.95,
            });
            labels.push(label);
        }
    }
    let m = compute_metrics(&preds, &labels, 0.9).map_err(|e| e.to_string())?;
    check(
        m.precision == 10.0 / 12.0 && m.recall == 10.0 / 13.0 && m.f1 == 0.8,
        || format!("got {:.6}/{:.6}/{:.6}", m.precision, m.recall, m.f1),
    )?;
    check(
        format!("{:.4}/{:.4}/{:.4}", m.precision, m.recall, m.f1) == "0.8333/0.7692/0.8000",
        || "rounded triple differs".into(),
    )?;
    let fixture = ComparisonTable {
        models: vec!["RF".into(), "GBT".into(), "SVM".into()],
        values: vec![
            vec![91.16, 100.0, 74.35],
            vec![73.28, 56.28, 98.30],
            vec![83.17, 72.12, 84.67],
            vec![97.82, 96.79, 97.38],
            vec![97.29, 95.41, 93.76],
        ],
    };
    let text = fixture.render();
    let back = ComparisonTable::parse(&text).map_err(|e| e.to_string())?;
    check(back == fixture, || {
        format!("table round trip lost values:\n{text}")
    })?;
    check(back.render() == text, || "re-rendered table differs".into())?;
    let report = |p: f64, r: f64, f: f64, a: f64, c: f64| MetricsReport {
        precision: p / 100.0,
        recall: r / 100.0,
        f1: f / 100.0,
        accuracy: a / 100.0,
        coverage: c / 100.0,
        ..m.clone()
    };
    let from_reports = ComparisonTable::from_reports(&[
        ("RF".into(), report(91.16, 73.28, 83.17, 97.82, 97.29)),
        ("GBT".into(), report(100.0, 56.28, 72.12, 96.79, 95.41)),
        ("SVM".into(), report(74.35, 98.30, 84.67, 97.38, 93.76)),
    ]);
    check(from_reports.render() == text, || {
        "table from reports renders differently".into()
    })?;
    Ok("0.8333/0.7692/0.8000; fixture table round-trips".into())
}

fn main() {
    let guarded = |f: &dyn Fn() -> Outcome| -> Outcome {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        })
    };
    let started = Instant::now();
    let scaled = catch_unwind(scaled_run).unwrap_or_else(|_| Err("scaled run panicked".into()));
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (
            "scaled experiment F1 >= 0.80 per architecture",
            Box::new(|| criterion_1(&scaled)),
        ),
        (
            "best architecture coverage >= 0.90",
            Box::new(|| criterion_2(&scaled)),
        ),
        (
            "injection contract over 50 seeded runs",
            Box::new(criterion_3),
        ),
        ("oracle equivalence", Box::new(criterion_4)),
        ("numerical descent", Box::new(criterion_5)),
        (
            "no leakage over 100 split/CV constructions",
            Box::new(criterion_6),
        ),
        (
            "determinism across runs and worker counts",
            Box::new(criterion_7),
        ),
        (
            "log-days ranks first for the forest",
            Box::new(|| criterion_8(&scaled)),
        ),
        (
            "metrics fixtures and table round trip",
            Box::new(criterion_9),
        ),
    ];
    let mut failed = 0;
    let mut out = std::io::stdout().lock();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let line = match guarded(f.as_ref()) {
            Ok(detail) => format!("PASS criterion {}: {name} ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                format!("FAIL criterion {}: {name} ({why})", i + 1)
            }
        };
        writeln!(out, "{line}").unwrap();
        out.flush().unwrap();
    }
    writeln!(
        out,
        "acceptance: {} passed, {failed} failed in {:.0}s",
        criteria.len() - failed,
        started.elapsed().as_secs_f64()
    )
    .unwrap();
    if failed > 0 {
        std::process::exit(1);
    }
}
