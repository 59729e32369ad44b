//! `kvtier`: trace-driven KV-cache tiering simulator and planner.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 runtime error.

// Negated float comparisons are how validation rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kvtier", version = manifest::VERSION, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchMode {
    Grid,
    Adaptive,
}

#[derive(clap::Args)]
pub struct ManifestArg {
    /// Manifest path; defaults to `<out stem>.manifest.json`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trace against one storage configuration.
    Simulate {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Search DRAM capacity, disk TTL and disk medium for the Pareto frontier.
    Search(commands::SearchArgs),
    /// Generate a synthetic trace from a JSON spec.
    GenTrace {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed in the spec.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Write reuse skew, footprint, interval and density tables for a trace.
    Analyze {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Baseline serving capacity in requests per second, for density.
        #[arg(long)]
        baseline_rps: Option<f64>,
        /// Number of ranked prefix subtrees to report.
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Width of the density windows.
        #[arg(long, default_value_t = 60)]
        window_seconds: u64,
        #[command(flatten)]
        manifest: ManifestArg,
    },
    /// Allocate per-subtree disk TTLs under a storage budget.
    TtlOpt(commands::TtlOptArgs),
    /// Hypervolume of one or more frontier CSVs against a shared reference.
    Hypervolume {
        /// Frontier CSV written by `search`; repeat to compare sets.
        #[arg(long, required = true)]
        frontier: Vec<PathBuf>,
        /// `auto`, or three comma-separated values (TTFT ms, negated
        /// throughput, cost).
        #[arg(long = "ref", default_value = "auto")]
        reference: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        manifest: ManifestArg,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate { trace, config, out, manifest } => commands::simulate(&trace, &config, &out, manifest),
        Command::Search(args) => commands::search(&args),
        Command::GenTrace { spec, seed, out, manifest } => commands::gen_trace(&spec, seed, &out, manifest),
        Command::Analyze {
            trace,
            out_dir,
            baseline_rps,
            k,
            window_seconds,
            manifest,
        } => commands::analyze(&trace, &out_dir, baseline_rps, k, window_seconds, manifest),
        Command::TtlOpt(args) => commands::ttl_opt(&args),
        Command::Hypervolume {
            frontier,
            reference,
            out,
            manifest,
        } => commands::hypervolume(&frontier, &reference, &out, manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, err) = match f {
                commands::Failure::Usage(e) => (2, e),
                commands::Failure::Runtime(e) => (3, e),
            };
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
