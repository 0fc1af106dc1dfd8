//! Command-line entry point: dataset generation, training, evaluation,
//! solver benchmarking, and single-instance solving, all reproducible from
//! a seed.
//!
//! Every command accepts `--config <json>` (a flat object of the same
//! fields); values resolve as defaults < config file < flags. The effective
//! configuration is echoed into the output directory next to the data it
//! produced. Diagnostics go to stderr, data to stdout and files.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "glntsp", version, about = "Graph Learning Network TSP pipeline")]
struct Cli {
    /// Worker threads (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and label a TSP instance family.
    Gen(commands::gen::GenArgs),
    /// Train an edge-prediction model on a dataset file.
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint against a labeled test set.
    Eval(commands::eval::EvalArgs),
    /// Benchmark the exact and heuristic solvers on fresh instances.
    Bench(commands::bench::BenchArgs),
    /// Solve a single instance and print the tour.
    Solve(commands::solve::SolveArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Build the global pool once, before any parallel work.
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Gen(args) => commands::gen::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Bench(args) => commands::bench::run(args),
        Command::Solve(args) => commands::solve::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
