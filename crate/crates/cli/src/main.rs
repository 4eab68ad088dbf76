//! Command-line runner for the localization experiments.
//!
//! Three subcommands: `rmse` sweeps SNR and writes aggregated error rows,
//! `cputime` sweeps array sizes and writes timing rows, and `single-run`
//! executes one sensing trial and writes its line-delimited trace. All
//! take `--config` (TOML, every key optional), `--seed` (overrides the
//! config's master seed), `--out` (stdout when omitted), and `--threads`.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use risloc_core::experiment::{
    emit_csv, run_cputime_experiment, run_rmse_experiment, run_single_trial, ExperimentConfig,
    ResultRow,
};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "risloc", version, about = "RIS-assisted localization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo accuracy sweep over SNR; writes CSV rows.
    Rmse(RunArgs),
    /// Per-trial runtime sweep over array sizes; writes CSV rows.
    Cputime(RunArgs),
    /// One sensing trial; writes a line-delimited trace.
    SingleRun(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, value_name = "path")]
    config: Option<PathBuf>,
    /// Master seed, overriding the config file.
    #[arg(long, value_name = "u64")]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "path")]
    out: Option<PathBuf>,
    /// Worker threads for parallel trials; all cores when omitted.
    #[arg(long, value_name = "n")]
    threads: Option<usize>,
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Rmse(a) | Command::Cputime(a) | Command::SingleRun(a) => a,
    };
    let config = load_config(args)?;

    if let Some(threads) = args.threads {
        if threads == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("could not configure the thread pool")?;
    }

    match cli.command {
        Command::Rmse(args) => {
            let rows = run_rmse_experiment(&config)?;
            write_csv(&rows, args.out.as_deref())
        }
        Command::Cputime(args) => {
            let rows = run_cputime_experiment(&config)?;
            write_csv(&rows, args.out.as_deref())
        }
        Command::SingleRun(args) => {
            // Trial 0 of the first configured cell, so the trace shows
            // exactly what the sweep's first cell sees.
            let trace =
                run_single_trial(&config, 0, 0, config.variants[0], config.policies[0])?;
            write_output(trace.to_jsonl()?.as_bytes(), args.out.as_deref())
        }
    }
}

fn load_config(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("could not read config {}", path.display()))?;
            toml::from_str(&text)
                .with_context(|| format!("could not parse config {}", path.display()))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn write_csv(rows: &[ResultRow], out: Option<&Path>) -> Result<()> {
    let mut buf = Vec::new();
    emit_csv(rows, &mut buf)?;
    write_output(&buf, out)
}

fn write_output(bytes: &[u8], out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, bytes)
            .with_context(|| format!("could not write {}", path.display())),
        None => std::io::stdout()
            .write_all(bytes)
            .context("could not write to stdout"),
    }
}
