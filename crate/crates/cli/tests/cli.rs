use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
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

fn lifecycle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lifecycle"))
        .args(args)
        .output()
        .unwrap()
}

fn text(o: &Output) -> String {
    format!(
        "{}{}",
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    )
}

/// Names and contents of the `.txt` files directly inside `dir`.
fn txt_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            (name, fs::read(&p).unwrap())
        })
        .collect()
}

#[test]
fn gen_corpus_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let w = d.path().display().to_string();
        let o = lifecycle(&[
            "--workdir",
            &w,
            "--seed",
            "11",
            "gen-corpus",
            "--cases",
            "20",
        ]);
        assert!(o.status.success(), "{}", text(&o));
        assert!(text(&o).contains("gen-corpus: ok"), "{}", text(&o));
    }
    for sub in ["corpus", "corpus/invoices"] {
        let files = txt_files(&a.path().join(sub));
        assert!(!files.is_empty());
        assert_eq!(files, txt_files(&b.path().join(sub)));
    }
}

#[test]
fn unknown_keys_fail_with_nonzero_exit() {
    let o = lifecycle(&["--set", "gmm.components=3", "config"]);
    assert!(!o.status.success());
    assert!(text(&o).contains("gmm.components"), "{}", text(&o));
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    fs::write(&cfg, "seed = 3\nnot_a_key = 1\n").unwrap();
    let o = lifecycle(&["--config", cfg.to_str().unwrap(), "config"]);
    assert!(!o.status.success());
    assert!(text(&o).contains("not_a_key"), "{}", text(&o));
}

#[test]
fn config_lists_effective_values() {
    let o = lifecycle(&["--seed", "9", "--set", "dbscan.eps=3.5", "config"]);
    assert!(o.status.success(), "{}", text(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().any(|l| l.starts_with("seed = 9")));
    assert!(out.lines().any(|l| l.starts_with("dbscan.eps = 3.5")));
    assert!(out.lines().any(|l| l.starts_with("tsne.perplexity = 25")));
}

#[test]
fn run_then_score() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    fs::write(&cfg, SMALL).unwrap();
    let w = dir.path().join("work").display().to_string();
    let base = ["--config", cfg.to_str().unwrap(), "--workdir", &w];
    let o = lifecycle(&[&base[..], &["gen-corpus"]].concat());
    assert!(o.status.success(), "{}", text(&o));
    let o = lifecycle(&[&base[..], &["--architectures", "rf,svm", "run"]].concat());
    assert!(o.status.success(), "{}", text(&o));
    let out = text(&o);
    assert!(out.contains("F1") && out.contains("best:"), "{out}");

    let model = format!("{w}/models/rf.json");
    let dataset = format!("{w}/inject/dataset.csv");
    let scored = format!("{w}/scored.csv");
    let o = lifecycle(
        &[
            &base[..],
            &[
                "score", "--model", &model, "--input", &dataset, "--out", &scored,
            ],
        ]
        .concat(),
    );
    assert!(o.status.success(), "{}", text(&o));
    let lines = fs::read_to_string(&scored).unwrap();
    assert!(lines.starts_with("line_id,class,confidence"));
    assert_eq!(
        lines.lines().count(),
        fs::read_to_string(&dataset).unwrap().lines().count()
    );

    let bad = format!("{w}/bad.csv");
    let header = lines.lines().next().unwrap();
    fs::write(&bad, format!("{header}\nL1,0,0.5\n")).unwrap();
    let o = lifecycle(
        &[
            &base[..],
            &[
                "score", "--model", &model, "--input", &bad, "--out", &scored,
            ],
        ]
        .concat(),
    );
    assert!(!o.status.success());
    assert!(text(&o).contains("error"), "{}", text(&o));
}
