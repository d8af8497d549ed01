//! `lognorm`: logarithmic-norm robustness certificates from the command line.

mod commands;
mod error;
mod numfmt;
mod output;
mod reproduce;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{CliError, CliResult, EXIT_USAGE};
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(
    name = "lognorm",
    version,
    about = "Robustness certificates for perturbed linear time-varying systems"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Output directory; the LOGNORM_OUT environment variable takes precedence.
    #[arg(long, global = true, default_value = "lognorm-out")]
    pub out: PathBuf,
    /// Integrator tolerances as REL or REL,ABS [default: 1e-10,1e-14].
    #[arg(long, global = true, value_name = "REL[,ABS]")]
    pub tol: Option<String>,
    /// Analysis horizon T (defaults depend on the scenario or function).
    #[arg(long, global = true, value_name = "T")]
    pub horizon: Option<f64>,
    /// Seed for Monte Carlo checks.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
}

impl GlobalArgs {
    pub fn out_dir(&self) -> OutDir {
        match std::env::var_os("LOGNORM_OUT") {
            Some(dir) if !dir.is_empty() => OutDir::new(dir),
            _ => OutDir::new(&self.out),
        }
    }

    /// (rel, abs) integrator tolerances.
    pub fn tolerances(&self) -> CliResult<(f64, f64)> {
        let Some(spec) = &self.tol else {
            return Ok((1e-10, 1e-14));
        };
        let parse = |s: &str| -> CliResult<f64> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| *v > 0.0 && v.is_finite())
                .ok_or_else(|| CliError::usage(format!("invalid tolerance `{s}`")))
        };
        match spec.split_once(',') {
            Some((rel, abs)) => Ok((parse(rel)?, parse(abs)?)),
            None => {
                let rel = parse(spec)?;
                Ok((rel, rel * 1e-4))
            }
        }
    }

    pub fn horizon(&self) -> CliResult<Option<f64>> {
        match self.horizon {
            Some(t) if !(t > 0.0 && t.is_finite()) => {
                Err(CliError::usage("--horizon must be positive"))
            }
            h => Ok(h),
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Induced norms and logarithmic norms of a constant matrix.
    Mu(commands::MuArgs),
    /// Check the three decay assumptions and write a certificate report.
    Certify(commands::CertifyArgs),
    /// Integrate the perturbed system and write the trajectory as CSV.
    Simulate(commands::SimulateArgs),
    /// Probe a function for membership in the classes V, AD and D.
    Classify(commands::ClassifyArgs),
    /// Rerun a worked example and compare with reference values.
    Reproduce(reproduce::ReproduceArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Mu(a) => commands::mu(a, &cli.global),
        Command::Certify(a) => commands::certify(a, &cli.global),
        Command::Simulate(a) => commands::simulate(a, &cli.global),
        Command::Classify(a) => commands::classify(a, &cli.global),
        Command::Reproduce(a) => reproduce::run(a, &cli.global),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
