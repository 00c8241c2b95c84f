//! `bfb`: runs, twin experiments and checks for the convection solver.
//!
//! Every invocation ends with one `RESULT key=value ...` line on stdout.
//! Exit status is 0 on success, 1 when input or a check fails and 2 when
//! the integration blows up.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Failure, Summary};

#[derive(Parser)]
#[command(name = "bfb", version, about = "Brinkman-Forchheimer-Benard convection solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the reference system from the configured initial state.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a twin experiment: reference run plus nudged run.
    Assimilate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate the absorbing-ball bounds against a diagnostics file.
    VerifyBounds {
        #[arg(long)]
        config: PathBuf,
        /// Diagnostics CSV; defaults to `output.diagnostics`.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        /// Trailing window standing in for the limsup; defaults to half
        /// the recorded span.
        #[arg(long)]
        window: Option<f64>,
    },
    /// Monotonicity, interpolant and spectral property suites.
    VerifyProperties {
        #[arg(long)]
        config: PathBuf,
        /// Random vector pairs per exponent.
        #[arg(long, default_value_t = 100_000)]
        pairs: usize,
        /// Random fields per interpolant.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// Repetitions of the spectral suite.
        #[arg(long, default_value_t = 5)]
        suite_trials: usize,
    },
    /// Print the header of a checkpoint or observation file.
    CheckpointInfo { path: PathBuf },
}

fn set_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("BFB_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(Failure::invalid(format!(
                "BFB_THREADS must be a positive integer, got '{raw}'"
            )))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::invalid(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> Result<Summary, Failure> {
    set_threads()?;
    match cli.command {
        Command::Simulate { config } => commands::simulate(&config),
        Command::Assimilate { config } => commands::assimilate(&config),
        Command::VerifyBounds {
            config,
            diagnostics,
            window,
        } => commands::verify_bounds(&config, diagnostics.as_deref(), window),
        Command::VerifyProperties {
            config,
            pairs,
            trials,
            suite_trials,
        } => commands::verify_properties(&config, pairs, trials, suite_trials),
        Command::CheckpointInfo { path } => commands::checkpoint_info(&path),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = match &cli.command {
        Command::Simulate { .. } => "simulate",
        Command::Assimilate { .. } => "assimilate",
        Command::VerifyBounds { .. } => "verify-bounds",
        Command::VerifyProperties { .. } => "verify-properties",
        Command::CheckpointInfo { .. } => "checkpoint-info",
    };
    match run(cli) {
        Ok(summary) => {
            println!("{}", summary.result_line("ok"));
            ExitCode::SUCCESS
        }
        Err(mut failure) => {
            failure.summary.set_command(name);
            eprintln!("error: {}", failure.message);
            println!("{}", failure.summary.result_line(failure.status()));
            ExitCode::from(failure.code)
        }
    }
}
