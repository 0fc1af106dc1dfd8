//! `glntsp train`: split a dataset file, run the training loop, and persist
//! the best checkpoint plus the epoch history.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use glntsp_core::dataset::{load_dataset, split_samples, DatasetSplit};
use glntsp_core::model::{
    save_checkpoint, train, AdjacencyNormalization, GlnConfig, InitMode, LossConfig,
    ScoreRecurrence, TrainConfig,
};

use crate::config::{echo_effective, load_file, parse_split, pick};

#[derive(Args)]
pub struct TrainArgs {
    /// Dataset file (JSON lines, a single instance size).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.json and history.csv.
    #[arg(long)]
    out: PathBuf,
    /// Maximum training epochs.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Early-stopping patience in epochs.
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    kernels: Option<usize>,
    /// Starting-adjacency edge probability (default 2/n).
    #[arg(long)]
    edge_prob: Option<f64>,
    #[arg(long, value_parser = parse_init_mode)]
    init_mode: Option<InitMode>,
    #[arg(long, value_parser = parse_adj_norm)]
    adj_norm: Option<AdjacencyNormalization>,
    #[arg(long, value_parser = parse_recurrence)]
    recurrence: Option<ScoreRecurrence>,
    #[arg(long)]
    hed_weight: Option<f64>,
    #[arg(long)]
    iou_weight: Option<f64>,
    /// Train,validation,test fractions; the test part is left untouched.
    #[arg(long, value_parser = parse_split)]
    split: Option<(f64, f64, f64)>,
    #[arg(long)]
    seed: Option<u64>,
    /// Flat JSON config file with the same fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_init_mode(s: &str) -> Result<InitMode, String> {
    match s {
        "aleatory" => Ok(InitMode::Aleatory),
        "identity" => Ok(InitMode::Identity),
        other => Err(format!("unknown init mode '{other}'")),
    }
}

fn parse_adj_norm(s: &str) -> Result<AdjacencyNormalization, String> {
    match s {
        "symmetric" => Ok(AdjacencyNormalization::Symmetric),
        "raw" => Ok(AdjacencyNormalization::Raw),
        other => Err(format!("unknown normalization '{other}'")),
    }
}

fn parse_recurrence(s: &str) -> Result<ScoreRecurrence, String> {
    match s {
        "rectified" => Ok(ScoreRecurrence::Rectified),
        "logistic" => Ok(ScoreRecurrence::Logistic),
        other => Err(format!("unknown recurrence '{other}'")),
    }
}

#[derive(Default, Deserialize)]
struct FileConfig {
    epochs: Option<usize>,
    batch: Option<usize>,
    lr: Option<f64>,
    patience: Option<usize>,
    hidden: Option<usize>,
    layers: Option<usize>,
    kernels: Option<usize>,
    edge_prob: Option<f64>,
    init_mode: Option<InitMode>,
    adj_norm: Option<AdjacencyNormalization>,
    recurrence: Option<ScoreRecurrence>,
    hed_weight: Option<f64>,
    iou_weight: Option<f64>,
    split: Option<(f64, f64, f64)>,
    seed: Option<u64>,
}

#[derive(Serialize)]
struct Effective {
    model: GlnConfig,
    loss: LossConfig,
    train: TrainConfig,
    split: DatasetSplit,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let file: FileConfig = load_file(args.config.as_ref())?;

    let samples = load_dataset(&args.data)
        .with_context(|| format!("loading dataset {}", args.data.display()))?;
    if samples.is_empty() {
        bail!("dataset {} is empty", args.data.display());
    }
    let sizes: BTreeSet<usize> = samples.iter().map(|s| s.instance.n()).collect();
    if sizes.len() > 1 {
        bail!(
            "dataset mixes instance sizes {:?}; the model is bound to one size",
            sizes
        );
    }
    let n = *sizes.iter().next().expect("nonempty");

    let base = GlnConfig::for_nodes(n);
    let model = GlnConfig {
        n,
        input_dim: base.input_dim,
        hidden_dim: pick(args.hidden, file.hidden, base.hidden_dim),
        kernel_count: pick(args.kernels, file.kernels, base.kernel_count),
        layer_count: pick(args.layers, file.layers, base.layer_count),
        init_edge_prob: pick(args.edge_prob, file.edge_prob, base.init_edge_prob),
        init_mode: pick(args.init_mode, file.init_mode, base.init_mode),
        adjacency_normalization: pick(
            args.adj_norm,
            file.adj_norm,
            base.adjacency_normalization,
        ),
        score_recurrence: pick(args.recurrence, file.recurrence, base.score_recurrence),
    };
    let loss_defaults = LossConfig::default();
    let loss = LossConfig {
        hed_weight: pick(args.hed_weight, file.hed_weight, loss_defaults.hed_weight),
        iou_weight: pick(args.iou_weight, file.iou_weight, loss_defaults.iou_weight),
        clamp: loss_defaults.clamp,
    };
    let train_defaults = TrainConfig::default();
    let train_config = TrainConfig {
        learning_rate: pick(args.lr, file.lr, train_defaults.learning_rate),
        batch_size: pick(args.batch, file.batch, train_defaults.batch_size),
        max_epochs: pick(args.epochs, file.epochs, train_defaults.max_epochs),
        patience: pick(args.patience, file.patience, train_defaults.patience),
        seed: pick(args.seed, file.seed, 0),
    };
    let split_fracs = pick(args.split, file.split, (0.8, 0.1, 0.1));
    let split = DatasetSplit {
        train: split_fracs.0,
        validation: split_fracs.1,
        test: split_fracs.2,
    };

    let (train_set, val_set, _test_set) =
        split_samples(samples, &split, train_config.seed).context("splitting dataset")?;
    eprintln!(
        "training on {} samples, validating on {} (n={n})",
        train_set.len(),
        val_set.len()
    );

    let (params, history) = train(&train_set, &val_set, &model, &loss, &train_config)
        .context("training failed")?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    let ckpt_path = args.out.join("checkpoint.json");
    save_checkpoint(&params, &ckpt_path).context("writing checkpoint")?;

    let mut csv = String::from("epoch,train_loss,val_loss,val_f1\n");
    for h in &history {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            h.epoch, h.train_loss, h.val_loss, h.val_f1
        ));
    }
    let history_path = args.out.join("history.csv");
    fs::write(&history_path, csv)
        .with_context(|| format!("writing {}", history_path.display()))?;

    echo_effective(
        &args.out,
        &Effective {
            model,
            loss,
            train: train_config,
            split,
        },
    )?;

    let best = history
        .iter()
        .map(|h| h.val_loss)
        .fold(f64::INFINITY, f64::min);
    println!(
        "trained {} epochs; best validation loss {best:.6}; checkpoint at {}",
        history.len(),
        ckpt_path.display()
    );
    Ok(())
}
