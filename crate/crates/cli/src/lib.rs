//! Command-line front end for the trihedge studies.
//!
//! A run reads a JSON [`config::RunConfig`], validates it for the chosen
//! command, runs the study inside a rayon pool and writes its tables plus a
//! `run_record.json` to the output directory.

pub mod commands;
pub mod config;
pub mod record;

use std::path::PathBuf;

use clap::Parser;

use crate::commands::RunError;
use crate::config::{Command, RunConfig};
use crate::record::{Format, Recorder, RunRecord};

/// Environment variable that overrides every other thread setting.
pub const THREADS_ENV: &str = "TRIHEDGE_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_TOLERANCE: i32 = 4;

#[derive(Debug, Clone, Parser)]
#[command(name = "trihedge", version, about = "Trinomial hedging studies")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; overridden by TRIHEDGE_THREADS.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

fn thread_count(cli: &Cli, config: &RunConfig) -> Result<usize, config::ConfigError> {
    if let Ok(raw) = std::env::var(THREADS_ENV) {
        return match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(config::ConfigError(format!("{THREADS_ENV} = '{raw}' is not a positive integer"))),
        };
    }
    if let Some(n) = cli.threads.or(config.threads) {
        if n == 0 {
            return Err(config::ConfigError("threads must be positive".into()));
        }
        return Ok(n);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Loads, validates and runs. Returns the record when the study finished,
/// whether or not its tolerance checks passed.
pub fn execute(cli: &Cli) -> Result<RunRecord, RunError> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = Some(out.clone());
    }
    let threads = thread_count(cli, &config)?;
    config.threads = Some(threads);
    config.validate(cli.command)?;

    let out_dir = config.out_dir.clone().unwrap_or_else(|| PathBuf::from("trihedge_out"));
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| anyhow::anyhow!("creating {}: {e}", out_dir.display()))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(anyhow::Error::from)?;
    let mut rec = Recorder::new(config.clone(), cli.command, threads, cli.format, out_dir);
    pool.install(|| commands::dispatch(cli.command, &config, &mut rec))?;
    Ok(rec.finish()?)
}

/// Runs the CLI and maps the outcome to a process exit code.
pub fn run(cli: &Cli) -> i32 {
    match execute(cli) {
        Ok(record) => {
            for c in record.checks.iter().filter(|c| !c.passed) {
                eprintln!("check failed: {} = {} > {}", c.name, c.value, c.bound);
            }
            if record.checks.iter().all(|c| c.passed) {
                EXIT_OK
            } else {
                EXIT_TOLERANCE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
