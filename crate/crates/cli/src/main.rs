use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use voxbow::pipeline::{
    cmd_codebook, cmd_encode, cmd_evaluate, cmd_extract, cmd_pipeline, cmd_select, cmd_synth,
    RunConfig, RunMetrics,
};
use voxbow::Result;

/// Bag-of-visual-words features, forward selection and SVM classification
/// for multi-metric brain volumes.
#[derive(Debug, Parser)]
#[command(name = "voxbow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration (TOML), or a run.json record from an earlier run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0: all cores). Output does not depend on this.
    #[arg(long)]
    workers: Option<usize>,
    /// Override the output directory.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic dataset described by [synth].
    Synth(Common),
    /// Extract patches into patches/patches.csv.
    Extract(Common),
    /// Learn per-region codebooks.
    Codebook(Common),
    /// Encode subjects into features.csv.
    Encode(Common),
    /// Forward selection under repeated cross-validation, then the final model.
    Select(Common),
    /// Curves, cohort contrast and word images.
    Evaluate(Common),
    /// Every stage in order.
    Pipeline(Common),
}

fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.set_seed(s);
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    if let Some(o) = &c.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "undefined".into())
}

fn summary(m: &RunMetrics) -> String {
    format!(
        "accuracy={:.4} sensitivity={} specificity={} features={} C={} gamma={}",
        m.accuracy,
        fmt_rate(m.sensitivity),
        fmt_rate(m.specificity),
        m.selected_features.len(),
        m.c,
        m.gamma
    )
}

fn run(cli: Cli) -> Result<String> {
    Ok(match cli.command {
        Command::Synth(c) => {
            let dir = cmd_synth(&resolve(&c)?)?;
            format!("ok stage=synth dataset={}", dir.display())
        }
        Command::Extract(c) => format!("ok stage=extract patches={}", cmd_extract(&resolve(&c)?)?),
        Command::Codebook(c) => {
            format!("ok stage=codebook codebooks={}", cmd_codebook(&resolve(&c)?)?)
        }
        Command::Encode(c) => {
            let t = cmd_encode(&resolve(&c)?)?;
            format!(
                "ok stage=encode subjects={} features={}",
                t.subject_ids.len(),
                t.n_features()
            )
        }
        Command::Select(c) => format!("ok stage=select {}", summary(&cmd_select(&resolve(&c)?)?)),
        Command::Evaluate(c) => {
            cmd_evaluate(&resolve(&c)?)?;
            "ok stage=evaluate".to_string()
        }
        Command::Pipeline(c) => {
            let (m, _) = cmd_pipeline(&resolve(&c)?)?;
            format!("ok stage=pipeline {}", summary(&m))
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(line) => {
            println!("{line}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.one_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
