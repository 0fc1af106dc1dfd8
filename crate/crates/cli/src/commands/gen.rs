//! `glntsp gen`: generate, label, persist, and optionally re-verify a
//! dataset.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

use glntsp_core::dataset::{
    generate_dataset, load_dataset, size_file_name, DatasetSplit, GenConfig, LabelPolicy,
};
use glntsp_core::solver::SolverKind;

use crate::config::{echo_effective, load_file, parse_split, parse_usize_list, pick};

#[derive(Args)]
pub struct GenArgs {
    /// Instance sizes, comma-separated (e.g. 10,20,50).
    #[arg(long, value_parser = parse_usize_list)]
    sizes: Option<Vec<usize>>,
    /// Instances per size.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Largest size labeled by the exact solver.
    #[arg(long)]
    exact_max_n: Option<usize>,
    /// Insertion starts tried by the heuristic labeler.
    #[arg(long)]
    heuristic_starts: Option<usize>,
    /// Train,validation,test fractions recorded in the manifest.
    #[arg(long, value_parser = parse_split)]
    split: Option<(f64, f64, f64)>,
    /// Reload every written file and re-check sample invariants.
    #[arg(long)]
    verify: bool,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Flat JSON config file with the same fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
struct FileConfig {
    sizes: Option<Vec<usize>>,
    count: Option<usize>,
    seed: Option<u64>,
    exact_max_n: Option<usize>,
    heuristic_starts: Option<usize>,
    split: Option<(f64, f64, f64)>,
}

#[derive(Serialize)]
struct Effective {
    sizes: Vec<usize>,
    count: usize,
    seed: u64,
    exact_max_n: usize,
    heuristic_starts: usize,
    split: DatasetSplit,
}

pub fn run(args: GenArgs) -> Result<()> {
    let file: FileConfig = load_file(args.config.as_ref())?;
    let defaults = LabelPolicy::default();
    let split = pick(args.split, file.split, (0.8, 0.1, 0.1));
    let effective = Effective {
        sizes: pick(args.sizes, file.sizes, vec![10]),
        count: pick(args.count, file.count, 100),
        seed: pick(args.seed, file.seed, 0),
        exact_max_n: pick(args.exact_max_n, file.exact_max_n, defaults.exact_max_n),
        heuristic_starts: pick(
            args.heuristic_starts,
            file.heuristic_starts,
            defaults.heuristic_starts,
        ),
        split: DatasetSplit {
            train: split.0,
            validation: split.1,
            test: split.2,
        },
    };

    let config = GenConfig {
        sizes: effective.sizes.clone(),
        count_per_size: effective.count,
        seed: effective.seed,
        policy: LabelPolicy {
            exact_max_n: effective.exact_max_n,
            heuristic_starts: effective.heuristic_starts,
        },
        split: effective.split,
    };
    let manifest = generate_dataset(&config, &args.out)
        .with_context(|| format!("generating dataset in {}", args.out.display()))?;
    echo_effective(&args.out, &effective)?;

    for &n in &manifest.sizes {
        let labeler = if n <= effective.exact_max_n {
            SolverKind::HeldKarp
        } else {
            SolverKind::TwoOptRefined
        };
        println!(
            "n={n}: {} samples ({labeler})",
            manifest.count_per_size
        );
    }
    println!("total: {} samples", manifest.total());

    if args.verify {
        for &n in &manifest.sizes {
            let path = args.out.join(size_file_name(n));
            let samples = load_dataset(&path)
                .with_context(|| format!("verifying {}", path.display()))?;
            for (i, s) in samples.iter().enumerate() {
                s.verify(1e-6)
                    .map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?;
            }
            eprintln!("verified {}", path.display());
        }
    }
    Ok(())
}
