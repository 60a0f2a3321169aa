//! Batch experiment driver: single adaptive integrations, fixed-step
//! convergence studies, work-precision sweeps, and stability-certificate
//! scans, emitting deterministic CSV or JSON.

// Validation sites use `!(x > 0.0)` so that NaN counts as out of range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod experiments;
mod output;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Errors carry the process exit code: 3 for configuration problems,
/// 2 for integration failures.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Integration(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Integration(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Integration(m) => write!(f, "integration failure: {m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "vsvo",
    about = "Stiff ODE experiments with embedded variable-order BDF methods",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one adaptive integration and dump its trace.
    Solve(ModeArgs),
    /// Fixed-stepsize convergence study over halved stepsizes.
    Convergence(ModeArgs),
    /// Work-precision sweep over tolerances and order subsets.
    Wp(ModeArgs),
    /// Stability-certificate scan over the filter weight.
    Gstab(ModeArgs),
}

/// Flags shared by all modes. Unset flags fall back to the config file
/// (`--config`), then to per-mode defaults.
#[derive(Args, Clone, Default)]
pub struct ModeArgs {
    /// Problem name: vanderpol | dahlquist | manufactured_smooth.
    #[arg(long)]
    problem: Option<String>,
    /// Local error tolerance for a single run.
    #[arg(long)]
    eps: Option<f64>,
    /// Log-spaced tolerance grid, `lo:hi:count` (e.g. 1e-1:1e-8:8).
    #[arg(long = "eps-grid")]
    eps_grid: Option<String>,
    /// Order subsets as digit strings, comma separated (e.g. 234 or 2,23,234).
    #[arg(long)]
    orders: Option<String>,
    /// Base stepsize (fixed-step modes) or initial stepsize (adaptive).
    #[arg(long)]
    k: Option<f64>,
    /// Number of halved stepsize levels in a convergence study.
    #[arg(long = "k-levels")]
    k_levels: Option<usize>,
    /// Filter weight: a single value or a `lo:hi:step` grid.
    #[arg(long)]
    mu: Option<String>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<std::path::PathBuf>,
    /// Output format: csv | json.
    #[arg(long)]
    format: Option<String>,
    /// Starting-window policy: exact | ramp.
    #[arg(long)]
    startup: Option<String>,
    /// Flat key-value config file; flags override its entries.
    #[arg(long)]
    config: Option<std::path::PathBuf>,
}

fn main() -> ExitCode {
    // Usage errors are configuration errors (exit 3); help and version
    // requests exit cleanly.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            e.print().expect("error output");
            return ExitCode::from(code);
        }
    };
    let run = || -> Result<(), CliError> {
        match cli.command {
            Command::Solve(args) => experiments::run_solve(&config::Settings::load(args)?),
            Command::Convergence(args) => {
                experiments::run_convergence(&config::Settings::load(args)?)
            }
            Command::Wp(args) => experiments::run_work_precision(&config::Settings::load(args)?),
            Command::Gstab(args) => experiments::run_gstab_scan(&config::Settings::load(args)?),
        }
    };
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vsvo: {e}");
            ExitCode::from(e.code())
        }
    }
}
