//! `glntsp eval`: run a checkpoint over a labeled test file and emit the
//! aggregate report plus per-instance rows.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use glntsp_core::dataset::load_dataset;
use glntsp_core::eval::{evaluate, instance_csv, EvalConfig};
use glntsp_core::model::load_checkpoint;

use crate::config::{echo_effective, load_file, pick};

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Labeled dataset file to evaluate against.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for report.json and per_instance.csv.
    #[arg(long)]
    out: PathBuf,
    /// Edge-probability threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Seed for the per-instance starting adjacencies.
    #[arg(long)]
    seed: Option<u64>,
    /// Flat JSON config file with the same fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
struct FileConfig {
    threshold: Option<f64>,
    seed: Option<u64>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let file: FileConfig = load_file(args.config.as_ref())?;
    let eval_config = EvalConfig {
        threshold: pick(args.threshold, file.threshold, 0.5),
        seed: pick(args.seed, file.seed, 0),
    };

    let params = load_checkpoint(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let samples = load_dataset(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    if let Some(bad) = samples.iter().find(|s| s.instance.n() != params.config.n) {
        bail!(
            "checkpoint is bound to n={} but dataset contains n={}",
            params.config.n,
            bad.instance.n()
        );
    }

    let (report, rows) = evaluate(&params, &samples, &eval_config).context("evaluation failed")?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let report_json = serde_json::to_string_pretty(&report)?;
    fs::write(args.out.join("report.json"), report_json.clone() + "\n")
        .context("writing report.json")?;
    fs::write(args.out.join("per_instance.csv"), instance_csv(&rows))
        .context("writing per_instance.csv")?;
    echo_effective(&args.out, &eval_config)?;

    // Per-graph macro average, for transparency next to the pooled numbers.
    let macro_f1 = rows.iter().map(|r| r.f1).sum::<f64>() / rows.len() as f64;
    println!("{report_json}");
    eprintln!(
        "micro f1 {:.4} | macro f1 {macro_f1:.4} | opt gap {:.2}%",
        report.f1,
        report.opt_gap * 100.0
    );
    Ok(())
}
