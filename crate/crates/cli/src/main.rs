//! `srqm`: batch front end for the superradiant-metrology toolkit.
//!
//! Subcommands: evolve | counting | estimate | sweep | regime | coupling.
//! Each takes a JSON config (--config), writes CSV/JSON artifacts into --out,
//! and attaches reproducibility metadata to every artifact. Exit codes:
//! 0 success (including negative diagnoses), 2 validation error, 3 numerical
//! or I/O failure. Errors are emitted as JSON on stderr.

mod commands;
mod config;
mod metadata;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use config::RunConfig;
use output::{Format, OutputContext};

#[derive(Parser)]
#[command(
    name = "srqm",
    version,
    about = "Dissipative Tavis-Cummings simulation, leaked-photon counting statistics, \
             and Heisenberg-vs-SQL scaling analysis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Artifact format for table-producing commands.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,
    /// Worker threads for sweep parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for synthetic-noise test bindings only.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full cavity model and write expectation channels.
    Evolve,
    /// Counting statistics of the leaked photons for the reduced model.
    Counting,
    /// Error-propagation uncertainty for a chosen x binding.
    Estimate,
    /// Scaling sweep over atom number with fitted exponents.
    Sweep,
    /// Superradiance-regime diagnosis (stdout JSON; pass=false is not an error).
    Regime,
    /// Cavity-geometry coupling constant and its length sensitivity.
    Coupling,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

/// Application-level error with the exit-code contract.
#[derive(Debug)]
pub struct AppError {
    pub kind: ErrorKind,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl AppError {
    pub fn validation(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Validation, message: message.into() }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Numerical, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { kind: ErrorKind::Io, message: message.into() }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Validation => 2,
            ErrorKind::Numerical | ErrorKind::Io => 3,
        }
    }

    pub fn to_json(&self) -> String {
        let kind = match self.kind {
            ErrorKind::Validation => "validation",
            ErrorKind::Numerical => "numerical",
            ErrorKind::Io => "io",
        };
        serde_json::json!({ "error": { "kind": kind, "message": self.message } }).to_string()
    }
}

impl From<srqm_core::Error> for AppError {
    fn from(e: srqm_core::Error) -> Self {
        use srqm_core::Error::*;
        match e {
            StepSizeUnderflow { .. } => AppError::numerical(e.to_string()),
            InsensitiveObservable { .. } => AppError::numerical(format!(
                "{e}; guidance: the chosen observable does not respond to x at this operating \
                 point. Move x0 away from stationary points, enlarge fd_step, or pick a \
                 different binding."
            )),
            _ => AppError::validation(e.to_string()),
        }
    }
}

fn run(cli: &Cli) -> Result<(), AppError> {
    if let Some(n) = cli.threads {
        // ignore the error if a pool already exists (e.g. repeated calls in tests)
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| AppError::validation("--config PATH is required"))?;
    let raw = std::fs::read_to_string(config_path)
        .map_err(|e| AppError::io(format!("cannot read {}: {e}", config_path.display())))?;
    let config = RunConfig::from_json(&raw)?;
    let ctx = OutputContext {
        dir: cli.out.clone(),
        format: match cli.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
            FormatArg::Both => Format::Both,
        },
        threads: cli.threads,
        seed: cli.seed,
        raw_config: raw,
    };
    match cli.command {
        Command::Evolve => commands::evolve(&config, &ctx),
        Command::Counting => commands::counting(&config, &ctx),
        Command::Estimate => commands::estimate(&config, &ctx),
        Command::Sweep => commands::sweep(&config, &ctx),
        Command::Regime => commands::regime(&config, &ctx),
        Command::Coupling => commands::coupling(&config, &ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code())
        }
    }
}
