//! Experiment runner around `csra-core`: reads a TOML document, runs one of
//! the subcommands and writes CSV tables plus a `manifest.json`.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::ExperimentConfig;
use output::Manifest;

#[derive(Debug, Parser)]
#[command(name = "csra", version, about = "Client selection and resource allocation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Label counts per client and the per-client divergence table.
    Partition,
    /// One optimized round with its feasibility report.
    Solve,
    /// Generalization bound breakdown.
    Bound,
    /// Training runs of the configured methods.
    Simulate,
    /// All methods on a shared federation, in parallel.
    Bench,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Partition => "partition",
            Command::Solve => "solve",
            Command::Bound => "bound",
            Command::Simulate => "simulate",
            Command::Bench => "bench",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML experiment document; library defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `system.rng_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Compare `solve` with brute force when few enough clients are eligible.
    #[arg(long, global = true)]
    pub oracle: bool,
    /// Overrides `fl.rounds` for `simulate` and `bench`.
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
}

/// What a successful run wrote.
#[derive(Debug, Clone)]
pub struct Report {
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub manifest: Manifest,
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> Result<Report> {
    let start = Instant::now();
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.system.rng_seed = seed;
    }
    if let Some(rounds) = c.rounds {
        cfg.fl.rounds = rounds;
    }
    let resolved = cfg.resolve()?;
    let mut warnings = Vec::new();
    let outputs = match cli.command {
        Command::Partition => commands::partition(&resolved)?,
        Command::Solve => commands::solve(&resolved, c.oracle, &mut warnings)?,
        Command::Bound => commands::bound(&cfg, &resolved)?,
        Command::Simulate => commands::simulate(&resolved, resolved.rounds, &mut warnings)?,
        Command::Bench => commands::bench(&resolved, resolved.rounds, &mut warnings)?,
    };
    let manifest = Manifest {
        config_hash: cfg.hash()?,
        seed: cfg.system.rng_seed,
        subcommand: cli.command.name().to_string(),
        outputs: outputs.names(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        duration_seconds: start.elapsed().as_secs_f64(),
    };
    let files = outputs.commit(&c.out_dir, &manifest)?;
    Ok(Report { files, warnings, manifest })
}

/// Parses `args` (program name first) and runs them. Usage errors come back
/// as `clap::Error` inside the `anyhow::Error`.
pub fn run<I, T>(args: I) -> Result<Report>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    execute(&cli)
}
