//! `quadsmc` command-line front end: batch runs, the validation suite and
//! trace plotting.

mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use quadsmc::validation::{run_suite, SuiteOptions};

/// Output directory override, used when `--out` is absent.
pub const OUT_DIR_ENV: &str = "QUADSMC_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "quadsmc", version, about = "Quadrotor sliding-mode tracking simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one or more scenario configs (in parallel).
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
        /// Output directory for traces, reports and figures.
        #[arg(long, env = OUT_DIR_ENV, default_value = ".")]
        out: PathBuf,
        /// Override the integration step (s).
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Run the numerical self-check suite on the reference scenario.
    Validate {
        /// Multiply every tolerance by this factor.
        #[arg(long, default_value_t = 1.0)]
        tol_scale: f64,
    },
    /// Render figures from a trace CSV.
    Plot {
        trace: PathBuf,
        /// Plot every n-th sample.
        #[arg(long, default_value_t = 1)]
        decimate: usize,
        /// Output directory; defaults to the trace's directory.
        #[arg(long, env = OUT_DIR_ENV)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Trace(String),
    #[error("{0}")]
    Abort(String),
    #[error("{0}")]
    Io(String),
    #[error("{failed} of {total} checks failed")]
    ChecksFailed { failed: usize, total: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Trace(_) => 2,
            CliError::Abort(_) => 3,
            CliError::Io(_) | CliError::ChecksFailed { .. } => 1,
        }
    }
}

fn validate(tol_scale: f64) -> Result<(), CliError> {
    if !(tol_scale.is_finite() && tol_scale > 0.0) {
        return Err(CliError::Config(format!(
            "--tol-scale must be positive and finite, got {tol_scale}"
        )));
    }
    let opts = SuiteOptions {
        tol_scale,
        ..SuiteOptions::default()
    };
    println!("validation suite, tolerance scale {tol_scale}");
    let results = run_suite(&opts);
    for r in &results {
        println!("{}", r.line());
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        return Err(CliError::ChecksFailed {
            failed,
            total: results.len(),
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { configs, out, dt } => run::cmd_run(&configs, &out, dt),
        Command::Validate { tol_scale } => validate(tol_scale),
        Command::Plot {
            trace,
            decimate,
            out,
        } => plot::cmd_plot(&trace, decimate, out.as_deref()).map(|files| {
            for f in files {
                println!("wrote {}", f.display());
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
