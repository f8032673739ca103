mod checkpoint;
mod config;
mod runner;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use damsgrad::Real;

use crate::config::{load_config, resolve_out_dir, ExperimentConfig};
use crate::runner::RunOptions;

#[derive(Parser)]
#[command(
    name = "damsgrad",
    version,
    about = "Benchmark runner for the decayed-maximum adaptive optimizer family"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured benchmark over its seed list; writes one CSV and
    /// one meta JSON per seed plus a summary JSON.
    Run {
        /// Experiment config (TOML).
        config: PathBuf,
        /// Run just this seed instead of the config's list.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; seeds run in parallel, aggregation stays ordered.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Output directory (overrides the config and DAMSGRAD_OUT_ROOT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Stop after this step and write a checkpoint (single seed only).
        #[arg(long)]
        checkpoint_at: Option<u64>,
        /// Where to put that checkpoint (default: <out>/checkpoint_seed_<s>.json).
        #[arg(long, requires = "checkpoint_at")]
        checkpoint_path: Option<PathBuf>,
        /// Continue a run from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Random-search the step size on the configured benchmark.
    Tune {
        config: PathBuf,
        /// Override the tuner seed from the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every seed under several beta3 regimes and emit a paired table.
    Compare {
        config: PathBuf,
        /// Comma-separated beta3 values, one column per value.
        #[arg(long, required = true, value_delimiter = ',')]
        modes: Vec<Real>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predicted vs simulated first-replacement step over the config's grid.
    AnalyzeReplacement {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn prepare(config: &PathBuf, out: Option<PathBuf>) -> Result<(ExperimentConfig, PathBuf)> {
    let cfg = load_config(config)?;
    let out_dir = resolve_out_dir(out, &cfg, config);
    std::fs::create_dir_all(&out_dir)
        .with_context(|| format!("cannot create output directory {}", out_dir.display()))?;
    Ok((cfg, out_dir))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            seed,
            jobs,
            out,
            checkpoint_at,
            checkpoint_path,
            resume,
        } => {
            let (cfg, out_dir) = prepare(&config, out)?;
            let opts = RunOptions {
                seed,
                jobs,
                checkpoint_at,
                checkpoint_path,
                resume,
            };
            runner::run_experiment(&cfg, &out_dir, &opts)
        }
        Command::Tune { config, seed, out } => {
            let (cfg, out_dir) = prepare(&config, out)?;
            runner::tune_experiment(&cfg, &out_dir, seed)
        }
        Command::Compare {
            config,
            modes,
            jobs,
            out,
        } => {
            let (cfg, out_dir) = prepare(&config, out)?;
            runner::compare_modes(&cfg, &out_dir, &modes, jobs)
        }
        Command::AnalyzeReplacement { config, out } => {
            let (cfg, out_dir) = prepare(&config, out)?;
            runner::analyze_replacement(&cfg, &out_dir)
        }
    }
}
