//! `msfq`: experiment runner for the retry-storm queue model.
//!
//! Every run writes its result files plus a `manifest.json` into `--out`.
//! Exit codes: 0 success, 2 usage or config error, 3 numerical error,
//! 4 base system unstable.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::config::{Config, EstimatorArg, ModeArg};
use crate::output::{OutputDir, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] msfq_core::Error),
}

impl CliError {
    fn missing(key: &str) -> Self {
        CliError::Config(format!("missing required key `{key}`"))
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Core(msfq_core::Error::InvalidParameter { .. }) => 2,
            CliError::Core(msfq_core::Error::Numerical(_)) => 3,
            CliError::Core(msfq_core::Error::BaseUnstable) => 4,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "msfq", version, about = "Retry-storm queue model experiments")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `simulation.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    /// Output directory; overrides `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides `simulation.mode`.
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Overrides `simulation.estimator`.
    #[arg(long, global = true, value_enum)]
    estimator: Option<EstimatorArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Retry probability by queue length.
    RetryProb {
        /// Service rate; falls back to `model.mu`.
        #[arg(long)]
        mu: Option<f64>,
        /// Client timeout in seconds; falls back to `model.tau`.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long, default_value_t = 30)]
        max_queue_len: u32,
    },
    /// One run: occupancy and stationarity verdict.
    Simulate,
    /// Multi-phase run with windowed distance metric.
    Timeline,
    /// Stationarity verdicts over a (lambda, mu) grid.
    Sweep,
    /// Metastable-failure probability of a trigger.
    Msf,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::RetryProb { .. } => "retry-prob",
            Command::Simulate => "simulate",
            Command::Timeline => "timeline",
            Command::Sweep => "sweep",
            Command::Msf => "msf",
        }
    }
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.simulation.seed = seed;
    }
    if let Some(mode) = cli.mode {
        config.simulation.mode = mode;
    }
    if let Some(estimator) = cli.estimator {
        config.simulation.estimator = estimator;
    }
    if let Some(out) = &cli.out {
        config.output.dir = Some(out.clone());
    }
    config.resolve();
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let mut config = load_config(cli)?;

    if let Command::RetryProb { mu, tau, .. } = &cli.command {
        let mu = mu.or(config.model.mu);
        let tau = tau.or(config.model.tau);
        let missing = match (mu, tau) {
            (None, _) => Some("--mu"),
            (_, None) => Some("--tau"),
            _ => None,
        };
        if let Some(flag) = missing {
            Cli::command()
                .error(
                    clap::error::ErrorKind::MissingRequiredArgument,
                    format!("retry-prob needs {flag} (or the matching [model] key)"),
                )
                .exit();
        }
        config.model.mu = mu;
        config.model.tau = tau;
        config.resolve();
    }

    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }

    let mut out = OutputDir::create(&config.out_dir())?;
    let outcome = match &cli.command {
        Command::RetryProb { max_queue_len, .. } => commands::retry_prob(
            config.model.mu.expect("checked above"),
            config.model.tau.expect("checked above"),
            *max_queue_len,
            &mut out,
        )?,
        Command::Simulate => commands::simulate_cmd(&config, &mut out)?,
        Command::Timeline => commands::timeline_cmd(&config, &mut out)?,
        Command::Sweep => commands::sweep_cmd(&config, &mut out)?,
        Command::Msf => commands::msf_cmd(&config, &mut out)?,
    };

    let manifest = RunManifest {
        subcommand: cli.command.name(),
        config_path: cli.config.as_deref(),
        parameters: &config,
        arguments: outcome.arguments,
        seeds: outcome.seeds,
        workers: rayon::current_num_threads(),
        outputs: out.written().to_vec(),
        tool_version: env!("CARGO_PKG_VERSION"),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    let path = out.json("manifest.json", &manifest)?;
    tracing::info!(manifest = %path.display(), dir = %out.path().display(), "done");
    Ok(())
}

fn main() -> ExitCode {
    let filter = EnvFilter::try_from_env("MSFQ_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("msfq: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
