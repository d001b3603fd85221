//! `itop` command-line front end.
//!
//! Config files are applied first, then `--set` overrides in order, so the
//! last assignment of a key wins. Worker threads come from `ITOP_THREADS`
//! (default 1).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use itop_core::harness::{self, Grid, RunOptions, TrainConfig};

#[derive(Parser)]
#[command(name = "itop", version, about = "Dynamic sparse training with in-time over-parameterization tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run and write its metrics, summary and checkpoint.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
        /// Stop after this many completed epochs (for interrupted runs).
        #[arg(long, value_name = "EPOCHS")]
        halt_after: Option<usize>,
    },
    /// Run every cell of a grid and estimate the thresholds.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Turn run directories into tidy and aggregate CSV tables.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in oracle checks.
    Verify,
}

fn load_config(path: &PathBuf, set: &[String]) -> itop_core::Result<TrainConfig> {
    let mut cfg = TrainConfig::load(path)?;
    cfg.apply_overrides(set)?;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let threads = harness::init_threads();
    log::debug!("{threads} worker threads");
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train {
            config,
            set,
            resume,
            halt_after,
        } => load_config(&config, &set).and_then(|cfg| {
            let data = harness::load_splits(&cfg.dataset, cfg.val_fraction, cfg.data_seed)?;
            let opts = RunOptions {
                persist: true,
                resume,
                halt_after,
            };
            match harness::run_with(&cfg, &data, &opts)? {
                Some(out) => {
                    let s = &out.main.summary;
                    println!(
                        "{}: best-val test acc {:.4} (epoch {}), final test acc {:.4}, R_s {:.4}",
                        s.method, s.best_val_test_acc, s.best_epoch, s.final_test_acc, s.rs
                    );
                }
                None => println!("halted; resume with --resume"),
            }
            println!("outputs in {}", cfg.out_dir.display());
            Ok(true)
        }),
        Command::Sweep { config, grid, set } => load_config(&config, &set).and_then(|cfg| {
            let grid = Grid::load(&grid)?;
            let result = harness::sweep(&cfg, &grid, true)?;
            let failed = result.cells.iter().filter(|c| c.record.is_err()).count();
            for c in &result.cells {
                match &c.record {
                    Ok(r) => println!("{:<40} acc {:.4}  R_s {:.4}", c.name, r.summary.best_val_test_acc, r.summary.rs),
                    Err(e) => println!("{:<40} FAILED: {e}", c.name),
                }
            }
            let n = harness::report(&cfg.out_dir, &cfg.out_dir)?;
            println!("{n} runs aggregated; tables and hypothesis.json in {}", cfg.out_dir.display());
            Ok(failed == 0)
        }),
        Command::Report { input, out } => harness::report(&input, &out).map(|n| {
            println!("{n} runs written to {}", out.display());
            true
        }),
        Command::Verify => Ok(harness::verify::verify_all()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
