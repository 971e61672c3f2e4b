//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error,
//! 4 optimization failure, 5 I/O error.

pub mod commands;
pub mod config;
pub mod formats;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use commands::RunOptions;
use config::ExperimentConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Optimization(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::InvalidParameter(_) => CliError::Config(msg),
            Error::Dimension(_)
            | Error::ZeroVariance { .. }
            | Error::ArchitectureMismatch(_)
            | Error::DegenerateTruth(_) => CliError::Data(msg),
            Error::Divergence(_) | Error::NonFinite(_) | Error::StepUnderflow { .. } => CliError::Optimization(msg),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mlp-granger", version, about = "Sparse-input MLP Granger causality discovery")]
pub struct Cli {
    /// Suppress progress output on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct Common {
    /// Experiment configuration (TOML). Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `out_dir` from the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Master seed; overrides `seed` from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset and its ground-truth graph.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Fit every component network at a single penalty strength.
    Fit {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV (`t,s0,...`).
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the penalty path and score it against a known graph.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Ground-truth graph CSV.
        #[arg(long)]
        truth: PathBuf,
    },
    /// Aggregate AUC rows from sweep output directories.
    Report {
        /// Directory for the aggregated tables.
        #[arg(long)]
        out: PathBuf,
        /// Sweep output directories.
        dirs: Vec<PathBuf>,
    },
    /// Simulate, sweep and report for every evaluation seed.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
        Ok((cfg, out))
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let opts = RunOptions { quiet: cli.quiet };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    pool.install(|| match &cli.command {
        Command::Simulate { common } => {
            let (cfg, out) = common.resolve()?;
            commands::simulate(&cfg, &out, opts)
        }
        Command::Fit { common, data } => {
            let (cfg, out) = common.resolve()?;
            commands::fit(&cfg, data, &out, opts)
        }
        Command::Sweep { common, data, truth } => {
            let (cfg, out) = common.resolve()?;
            commands::sweep(&cfg, data, truth, &out, opts)
        }
        Command::Report { out, dirs } => commands::report(dirs, out, opts),
        Command::Experiment { common } => {
            let (cfg, out) = common.resolve()?;
            commands::experiment(&cfg, &out, opts)
        }
    })
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
