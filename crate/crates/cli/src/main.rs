//! `rheoctl`: solve, optimize and verify from a JSON run configuration.
//!
//! Every command writes its artifacts and a run log into the output
//! directory. Failures print `{"error": {"kind": ..., "message": ...}}` on
//! stderr and exit nonzero.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "rheoctl", version, about = "Distributed control of variable-exponent generalized Navier-Stokes flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Random seed; overrides `seed` from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for parallel campaigns; 1 forces serial execution.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the state equation for the configured force.
    Solve(Common),
    /// Minimise the tracking functional from a zero control.
    Optimize(Common),
    /// Certification campaigns and convergence studies.
    Verify {
        #[command(subcommand)]
        what: Verify,
    },
    /// Finite-difference check of the stress Jacobian and potential gradient.
    TensorCheck(Common),
}

#[derive(Subcommand, Debug)]
enum Verify {
    /// Pointwise stress inequalities over seeded random samples.
    Tensor(Common),
    /// Manufactured-solution refinement study.
    Mms(Common),
    /// Discrete Poincaré and Korn constants, tensor constants and Hölder estimate.
    Constants(Common),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] rheoctl::Error),
    #[error("{0}")]
    Usage(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Usage(_) => "usage",
            CliError::Verification(_) => "verification_failed",
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Verification(_) => 3,
            CliError::Core(_) => 1,
        }
    }
}

fn report_error(e: &CliError) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": e.kind(), "message": e.to_string() } });
    eprintln!("{body}");
    ExitCode::from(e.exit_code())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // help and version requests
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report_error(&CliError::Usage(e.kind().to_string() + ": " + e.render().to_string().trim())),
    };
    let result = match &cli.command {
        Command::Solve(c) => commands::run(c, commands::Task::Solve),
        Command::Optimize(c) => commands::run(c, commands::Task::Optimize),
        Command::Verify { what: Verify::Tensor(c) } => commands::run(c, commands::Task::VerifyTensor),
        Command::Verify { what: Verify::Mms(c) } => commands::run(c, commands::Task::VerifyMms),
        Command::Verify { what: Verify::Constants(c) } => commands::run(c, commands::Task::VerifyConstants),
        Command::TensorCheck(c) => commands::run(c, commands::Task::TensorCheck),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_error(&e),
    }
}
