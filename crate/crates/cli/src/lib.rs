//! Command-line front end: `solve`, `simulate`, `compare` and `diagnose` for
//! run configurations described in [`config`].

pub mod commands;
pub mod config;
pub mod report;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use modlindley::Error;

pub use config::{Format, Overrides, RunConfig};

/// Environment variable capping the worker count (0 or unset = automatic).
pub const THREADS_ENV: &str = "MODLINDLEY_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("solver error: {0}")]
    Solver(Error),
}

impl CliError {
    /// Errors that come from the model parameters themselves are reported as
    /// configuration errors; everything else is a solver failure.
    pub fn from_model(e: Error) -> Self {
        match e {
            Error::InvalidParameter { field, reason } => {
                CliError::Config(format!("`model.{field}`: {reason}"))
            }
            Error::DimensionMismatch(_)
            | Error::Reducible
            | Error::NonFinite(_)
            | Error::UnsupportedLaw(_)
            | Error::DomainError(_) => CliError::Config(e.to_string()),
            other => CliError::Solver(other),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Solver(_) => 2,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ComparisonFailed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::ComparisonFailed => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "modlindley", version, about = "Series solver and Monte Carlo oracle for modulated autoregressive queues")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the analytic transform, unknowns and moments on the grid.
    Solve(RunArgs),
    /// Estimate the same quantities by Monte Carlo.
    Simulate(RunArgs),
    /// Check analytic values against simulation (exit 3 on failure).
    Compare(RunArgs),
    /// Report spectra, contraction moduli and pole sets.
    Diagnose(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Run configuration (TOML).
    pub config: PathBuf,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_order: Option<usize>,
    /// Monte Carlo replications.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report file; the report goes to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Scale the resolved unknowns by `1 + F` before evaluating (sensitivity check).
    #[arg(long, value_name = "F")]
    pub inject_unknown_perturbation: Option<f64>,
}

impl RunArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            tol: self.tol,
            max_order: self.max_order,
            replications: self.reps,
            steps: self.steps,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
        }
    }

    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&self.overrides())?;
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    match &cli.command {
        Command::Solve(args) => commands::cmd_solve(args),
        Command::Simulate(args) => commands::cmd_simulate(args),
        Command::Compare(args) => commands::cmd_compare(args),
        Command::Diagnose(args) => commands::cmd_diagnose(args),
    }
}

/// Configure the global worker pool from [`THREADS_ENV`].
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Config(format!("{THREADS_ENV}={raw:?} is not a thread count")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("{THREADS_ENV}: {e}")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_errors_are_config_errors() {
        let e = CliError::from_model(Error::InvalidParameter {
            field: "a[0]".into(),
            reason: "must lie in (0, 1)".into(),
        });
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("model.a[0]"));
    }

    #[test]
    fn numerical_failures_are_solver_errors() {
        let e = CliError::from_model(Error::DegenerateSpectrum { gap: 0.0 });
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn flags_parse_into_overrides() {
        let cli = Cli::try_parse_from([
            "modlindley", "compare", "run.toml", "--reps", "10", "--format", "json",
            "--inject-unknown-perturbation", "0.1",
        ])
        .unwrap();
        let Command::Compare(args) = cli.command else { panic!() };
        let o = args.overrides();
        assert_eq!((o.replications, o.format), (Some(10), Some(Format::Json)));
        assert_eq!(args.inject_unknown_perturbation, Some(0.1));
    }
}
