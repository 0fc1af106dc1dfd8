//! `glntsp solve`: solve one instance (generated from a seed or read from a
//! coordinates file) and print the canonical tour and its length.

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;

use glntsp_core::dataset::generate_instance;
use glntsp_core::graph::{distance_matrix, tour_length, TspInstance};
use glntsp_core::seeding::stream_rng;
use glntsp_core::solver::{
    heuristic_label_tour, insertion_heuristic, nearest_neighbor, solve_brute_force,
    solve_held_karp, InsertionRule, SolverKind,
};

#[derive(Args)]
pub struct SolveArgs {
    /// Size of a freshly generated instance (ignored with --input).
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON file holding [[x,y],...] coordinates in the unit square.
    #[arg(long)]
    input: Option<PathBuf>,
    /// One of: brute_force, held_karp, nearest_neighbor, nearest_insertion,
    /// random_insertion, farthest_insertion, two_opt_refined.
    #[arg(long, default_value = "held_karp")]
    solver: SolverKind,
    /// Start node for nearest_neighbor.
    #[arg(long, default_value_t = 0)]
    start: usize,
}

pub fn run(args: SolveArgs) -> Result<()> {
    let instance = match &args.input {
        Some(path) => {
            let body = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let coords: Vec<[f64; 2]> =
                serde_json::from_str(&body).with_context(|| format!("parsing {}", path.display()))?;
            TspInstance::new(coords).context("invalid coordinates")?
        }
        None => {
            if args.n < 3 {
                bail!("need at least 3 nodes");
            }
            let mut rng = stream_rng(args.seed, &[args.n as u64, 0]);
            generate_instance(args.n, &mut rng)?
        }
    };
    let d = distance_matrix(&instance);

    let tour = match args.solver {
        SolverKind::BruteForce => solve_brute_force(&d)?,
        SolverKind::HeldKarp => solve_held_karp(&d)?,
        SolverKind::NearestNeighbor => nearest_neighbor(&d, args.start)?,
        SolverKind::NearestInsertion => insertion_heuristic(&d, InsertionRule::Nearest, None)?,
        SolverKind::RandomInsertion => {
            let mut rng = stream_rng(args.seed, &[1]);
            insertion_heuristic(&d, InsertionRule::Random, Some(&mut rng))?
        }
        SolverKind::FarthestInsertion => insertion_heuristic(&d, InsertionRule::Farthest, None)?,
        SolverKind::TwoOptRefined => heuristic_label_tour(&d, 10)?,
    };
    let len = tour_length(&tour, &d)?;

    let order: Vec<String> = tour.order().iter().map(|v| v.to_string()).collect();
    println!("tour: {}", order.join(" "));
    println!("length: {len:.9}");
    Ok(())
}
