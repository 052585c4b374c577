//! Batch driver for the two-state magnetic Schrodinger laboratory.
//!
//! One command per process; all parameters come from an INI-style config
//! file (see `config.rs` for the schema and defaults), with `--seed` and
//! `--out` as command-line overrides. Exit codes: 0 success, 2 configuration
//! error, 3 numerical failure, 4 selftest failure.

mod commands;
mod config;
mod reports;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;
use reports::OutputSet;

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub enum AppError {
    Config(String),
    Numerical(String),
    Selftest(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Numerical(_) => 3,
            AppError::Selftest(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Numerical(m) | AppError::Selftest(m) => m,
        }
    }
}

impl From<std::io::Error> for AppError {
    fn from(e: std::io::Error) -> Self {
        AppError::Numerical(format!("io error: {e}"))
    }
}

#[derive(Parser)]
#[command(
    name = "magschro",
    version,
    about = "Experiments for the coupled two-state magnetic Schrodinger system"
)]
struct Cli {
    /// Path to an INI-style experiment configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides the config file).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Sampling seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Number of worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Solve one initial-boundary value problem and save the trajectory.
    Forward,
    /// Sweep the weighted energy estimate over the s grid and report fits.
    CarlemanCheck,
    /// Build the probe set, save its manifest and report the injectivity constant.
    ProbeCheck,
    /// Simulate boundary measurements for every probe.
    Simulate,
    /// Compare coefficient distances against measurement gaps over an ensemble.
    Stability,
    /// Recover coefficient perturbations from simulated measurements.
    Reconstruct,
    /// Run the built-in invariant suite.
    Selftest,
}

fn run(cli: &Cli) -> Result<(), AppError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(AppError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::Config(format!("thread pool: {e}")))?;
    }

    let mut cfg = match &cli.config {
        Some(path) => config::parse_config(path).map_err(|e| AppError::Config(e.to_string()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.display().to_string();
    }

    let out_root = PathBuf::from(&cfg.out_dir);
    let mut out = OutputSet::new(&out_root, &cfg.canonical_string())?;
    out.text("config.txt", &cfg.canonical_string())?;

    let result = match cli.command {
        Command::Forward => commands::forward(&cfg, &mut out),
        Command::CarlemanCheck => commands::carleman_check_cmd(&cfg, &mut out),
        Command::ProbeCheck => commands::probe_check(&cfg, &mut out),
        Command::Simulate => commands::simulate(&cfg, &mut out),
        Command::Stability => commands::stability(&cfg, &mut out),
        Command::Reconstruct => commands::reconstruct(&cfg, &mut out),
        Command::Selftest => commands::selftest(&cfg, &mut out),
    };
    if result.is_err() {
        out.cleanup();
    }
    result
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
