//! `fracpot`: scenario runner for `(-Δ)^s u = |∇u|^q + ω`.
//!
//! Exit codes: 0 success, 1 failed check or bad input, 2 measure not admissible,
//! 3 Picard divergence, 4 I/O failure, 5 grid metadata mismatch.

mod checks;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fracpot::Error),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("metadata mismatch: {0}")]
    Mismatch(String),
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Core(fracpot::Error::Json(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use fracpot::Error as E;
        match self {
            CliError::Core(E::NotAdmissible { .. }) => 2,
            CliError::Core(E::Diverged(_)) => 3,
            CliError::Core(E::Io(_)) | CliError::Io(_) => 4,
            CliError::Core(E::GridMismatch(_)) | CliError::Mismatch(_) => 5,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fracpot", version, about = "Potential-theoretic solver for (-Δ)^s u = |∇u|^q + ω")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: GlobalOpts,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalOpts {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory, overriding the scenario's.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Rescale the measure to the admissibility target before solving.
    #[arg(long, global = true)]
    auto_scale: bool,
    /// Admissibility target θ, overriding the scenario's.
    #[arg(long, global = true)]
    theta: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the constants ledger.
    Constants {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        s: Option<f64>,
        #[arg(long)]
        q: Option<f64>,
    },
    /// Run the Picard iteration and write fields and report.json.
    Solve,
    /// Estimate the Riesz capacity of a cell set.
    Capacity(commands::CapacityArgs),
    /// Measure the Wolff-type ratio of the scenario's measure.
    Wolff,
    /// Re-run the solution checks on stored fields.
    Verify(commands::FieldArgs),
    /// Norms, level sets and decay of a stored field (or of I_2s ω).
    Diagnostics(commands::FieldArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("fracpot: cannot set up {k} threads: {e}");
            return ExitCode::from(1);
        }
    }
    let g = &cli.global;
    let result = match &cli.command {
        Command::Constants { n, s, q } => commands::constants(g, *n, *s, *q),
        Command::Solve => commands::solve(g),
        Command::Capacity(a) => commands::capacity(g, a),
        Command::Wolff => commands::wolff(g),
        Command::Verify(a) => commands::verify(g, a),
        Command::Diagnostics(a) => commands::diagnostics(g, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("fracpot: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
