//! `rectify`: prediction-powered survey estimation from the command line.
//!
//! Exit codes: 0 on success, 2 on input validation failure, 3 on numerical
//! failure.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "rectify", version, about = "Combine model-predicted survey responses with a small human sample into unbiased population estimates")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Master seed driving every randomized component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Output directory for reports (falls back to $RECTIFY_OUT_DIR, then ./rectify-out).
    #[arg(long, global = true, env = "RECTIFY_OUT_DIR")]
    out: Option<PathBuf>,

    /// Worker threads for replications and bootstrap resampling
    /// (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rectified estimate from a labeled and an unlabeled CSV frame.
    Estimate(commands::EstimateArgs),
    /// Monte-Carlo study of bias, coverage, and ESS gain per lambda policy.
    Simulate(commands::SimulateArgs),
    /// Interval coverage study across CI methods.
    Coverage(commands::ConfigArgs),
    /// ESS gain as the labeled sample grows.
    EssCurve(commands::ConfigArgs),
    /// Fixed-budget fine-tune-versus-rectify allocation sweep.
    Allocate(commands::ConfigArgs),
    /// Subgroup bias before/after recentering on the rectified estimate.
    Subgroup(commands::ConfigArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if let Some(workers) = cli.workers {
        // Ignore failure: the global pool can only be set once (tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }

    let out_dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("rectify-out"));
    let ctx = commands::Context {
        seed: cli.seed,
        out_dir,
        workers: cli.workers,
    };

    let result = match cli.command {
        Command::Estimate(args) => commands::estimate(&ctx, args),
        Command::Simulate(args) => commands::simulate(&ctx, args),
        Command::Coverage(args) => commands::coverage(&ctx, args),
        Command::EssCurve(args) => commands::ess_curve(&ctx, args),
        Command::Allocate(args) => commands::allocate(&ctx, args),
        Command::Subgroup(args) => commands::subgroup(&ctx, args),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numeric() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
