//! `glntsp bench`: run the non-learned solvers over fresh instances and
//! print a mean-length / optimality-gap table.
//!
//! Gaps are measured against the exact optimum when the size allows it and
//! against the best heuristic otherwise; the reference row is labeled.

use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;

use glntsp_core::dataset::generate_instance;
use glntsp_core::graph::{distance_matrix, tour_length, DistanceMatrix};
use glntsp_core::seeding::stream_rng;
use glntsp_core::solver::{
    insertion_heuristic, nearest_neighbor, solve_held_karp, two_opt_refine, InsertionRule,
    HELD_KARP_MAX_N,
};

use crate::config::{echo_effective, load_file, pick};

const BENCH_RNG_TAG: u64 = 0x62656e_6368;

#[derive(Args)]
pub struct BenchArgs {
    /// Instance size.
    #[arg(long)]
    n: Option<usize>,
    /// Number of fresh instances.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Optional directory for a CSV copy of the table.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat JSON config file with the same fields.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
struct FileConfig {
    n: Option<usize>,
    count: Option<usize>,
    seed: Option<u64>,
}

#[derive(serde::Serialize)]
struct Effective {
    n: usize,
    count: usize,
    seed: u64,
}

struct Row {
    solver: &'static str,
    mean_len: f64,
    seconds: f64,
}

fn mean_over<F>(instances: &[DistanceMatrix], f: F) -> Result<Row>
where
    F: Fn(usize, &DistanceMatrix) -> Result<f64> + Sync,
{
    let start = Instant::now();
    let lens: Vec<f64> = instances
        .par_iter()
        .enumerate()
        .map(|(i, d)| f(i, d))
        .collect::<Result<_>>()?;
    Ok(Row {
        solver: "",
        mean_len: lens.iter().sum::<f64>() / lens.len() as f64,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run(args: BenchArgs) -> Result<()> {
    let file: FileConfig = load_file(args.config.as_ref())?;
    let effective = Effective {
        n: pick(args.n, file.n, 20),
        count: pick(args.count, file.count, 1000),
        seed: pick(args.seed, file.seed, 0),
    };
    let (n, count, seed) = (effective.n, effective.count, effective.seed);

    eprintln!("benchmarking {count} fresh instances of n={n} (seed {seed})");
    let instances: Vec<DistanceMatrix> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, &[n as u64, i as u64]);
            Ok(distance_matrix(&generate_instance(n, &mut rng)?))
        })
        .collect::<Result<_>>()?;

    let mut rows: Vec<Row> = Vec::new();
    if n <= HELD_KARP_MAX_N {
        let mut row = mean_over(&instances, |_, d| {
            Ok(tour_length(&solve_held_karp(d)?, d)?)
        })?;
        row.solver = "held_karp";
        rows.push(row);
    }
    let mut row = mean_over(&instances, |_, d| {
        Ok(tour_length(&nearest_neighbor(d, 0)?, d)?)
    })?;
    row.solver = "nearest_neighbor";
    rows.push(row);
    for (name, rule) in [
        ("nearest_insertion", InsertionRule::Nearest),
        ("random_insertion", InsertionRule::Random),
        ("farthest_insertion", InsertionRule::Farthest),
    ] {
        let mut row = mean_over(&instances, |i, d| {
            let mut rng = stream_rng(seed, &[BENCH_RNG_TAG, i as u64]);
            let rng_arg = (rule == InsertionRule::Random).then_some(&mut rng as &mut dyn rand::RngCore);
            Ok(tour_length(&insertion_heuristic(d, rule, rng_arg)?, d)?)
        })?;
        row.solver = name;
        rows.push(row);
    }
    let mut row = mean_over(&instances, |_, d| {
        let start = nearest_neighbor(d, 0)?;
        Ok(tour_length(&two_opt_refine(&start, d)?, d)?)
    })?;
    row.solver = "two_opt";
    rows.push(row);

    // Gap reference: exact DP when available, else the best mean found.
    let (reference, ref_len) = if n <= HELD_KARP_MAX_N {
        ("held_karp", rows[0].mean_len)
    } else {
        let best = rows
            .iter()
            .min_by(|a, b| a.mean_len.partial_cmp(&b.mean_len).expect("finite"))
            .expect("rows nonempty");
        (best.solver, best.mean_len)
    };

    println!("reference: {reference} (mean {ref_len:.4})");
    println!("{:<20} {:>10} {:>10} {:>10}", "solver", "mean_len", "opt_gap", "seconds");
    let mut csv = String::from("solver,mean_len,opt_gap,seconds\n");
    for row in &rows {
        let gap = row.mean_len / ref_len - 1.0;
        println!(
            "{:<20} {:>10.4} {:>9.2}% {:>10.2}",
            row.solver,
            row.mean_len,
            gap * 100.0,
            row.seconds
        );
        csv.push_str(&format!(
            "{},{},{},{}\n",
            row.solver, row.mean_len, gap, row.seconds
        ));
    }

    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        fs::write(dir.join("bench.csv"), csv).context("writing bench.csv")?;
        echo_effective(dir, &effective)?;
    }
    Ok(())
}
