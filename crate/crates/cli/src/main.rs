//! `lifecycle`: command-line driver for the invoice lifecycle anomaly pipeline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use invoice_lifecycle::evaluate::ComparisonTable;
use invoice_lifecycle::pipeline::{Pipeline, PipelineConfig, RunManifest, CONFIG_KEYS};

#[derive(Parser, Debug)]
#[command(
    name = "lifecycle",
    version,
    about = "Invoice lifecycle anomaly pipeline"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true)]
    workdir: Option<PathBuf>,
    /// Comma-separated subset of rf, gbt, svm.
    #[arg(long, global = true)]
    architectures: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a seeded synthetic corpus in the ingest format.
    GenCorpus {
        /// Number of cases.
        #[arg(long)]
        cases: Option<usize>,
    },
    /// Parse and validate invoice files into the corpus JSON.
    Ingest,
    /// Select well-distributed litigation cases.
    Select,
    /// Featurize selected cases and inject lifecycle anomalies.
    Inject,
    /// Grid-search and fit every selected architecture.
    Train,
    /// Validation metrics, comparison table and importance.
    Eval,
    /// ingest, select, inject, train and eval in sequence.
    Run,
    /// Score line items with a trained model.
    Score {
        #[arg(long)]
        model: PathBuf,
        /// Invoice file (pipe-delimited) or dataset CSV.
        #[arg(long)]
        input: PathBuf,
        /// Case manifest for invoice input (default: <corpus_in>/cases.txt).
        #[arg(long)]
        cases: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print every config key with its effective value and description.
    Config,
}

fn build_config(common: &Common, command: &Command) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(path) = &common.config {
        cfg.apply_file(path)?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got '{kv}'"))?;
        cfg.set(k, v)?;
    }
    if let Some(seed) = common.seed {
        cfg.set("seed", &seed.to_string())?;
    }
    if let Some(dir) = &common.workdir {
        cfg.set("workdir", &dir.to_string_lossy())?;
    }
    if let Some(a) = &common.architectures {
        cfg.set("architectures", a)?;
    }
    if let Some(t) = common.threads {
        cfg.set("threads", &t.to_string())?;
    }
    if let Command::GenCorpus { cases: Some(n) } = command {
        cfg.set("gen.cases", &n.to_string())?;
    }
    Ok(cfg)
}

fn report(m: &RunManifest) {
    let counts: Vec<String> = m.counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{}: ok in {:.1}s ({})",
        m.stage,
        m.elapsed_seconds,
        counts.join(", ")
    );
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = build_config(&cli.common, &cli.command)?;
    if let Command::Config = cli.command {
        for (key, _, doc) in CONFIG_KEYS {
            println!("{key} = {}  # {doc}", cfg.get(key).unwrap_or_default());
        }
        return Ok(());
    }
    let pipeline = Pipeline::new(cfg)?;
    match cli.command {
        Command::GenCorpus { .. } => report(&pipeline.gen_corpus()?),
        Command::Ingest => report(&pipeline.ingest()?),
        Command::Select => report(&pipeline.select()?),
        Command::Inject => report(&pipeline.inject()?),
        Command::Train => report(&pipeline.train()?),
        Command::Eval | Command::Run => {
            let summary = if matches!(cli.command, Command::Run) {
                pipeline.run()?
            } else {
                pipeline.eval()?
            };
            let reports: Vec<_> = summary
                .architectures
                .iter()
                .map(|e| (e.architecture.label().to_string(), e.validation.clone()))
                .collect();
            print!("{}", ComparisonTable::from_reports(&reports).render());
            println!("best: {}", summary.best_architecture.label());
            println!("artifacts: {}", pipeline.workdir().display());
        }
        Command::Score {
            model,
            input,
            cases,
            out,
        } => {
            let s = pipeline.score(&model, &input, cases.as_deref(), &out)?;
            println!(
                "scored {} rows, {} anomalous -> {}",
                s.rows,
                s.anomalous,
                out.display()
            );
        }
        Command::Config => unreachable!(),
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
