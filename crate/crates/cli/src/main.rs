use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fotinv_cli::{run_command, Command, RunOptions};

/// Batch solver for boundary-misfit absorption reconstruction: forward
/// solves, gradient verification, single-exponent minimisation and the
/// exponent continuation, all driven by a JSON experiment config.
#[derive(Parser)]
#[command(name = "fotinv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports and field dumps.
    #[arg(long)]
    out: PathBuf,
    /// Override the config's RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restart every continuation stage from the configured initial field
    /// instead of the previous stage's minimiser.
    #[arg(long)]
    no_warm_start: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the coupled systems at the configured absorption field and
    /// write field dumps plus the estimate-ratio report.
    Forward(RunArgs),
    /// Compare adjoint gradients against central finite differences.
    Gradcheck(RunArgs),
    /// Minimise at the last schedule exponent and write the run log and
    /// complementarity report.
    Optimize(RunArgs),
    /// Run the full exponent continuation with measure diagnostics.
    Continuation(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match cli.command {
        Cmd::Forward(a) => (Command::Forward, a),
        Cmd::Gradcheck(a) => (Command::Gradcheck, a),
        Cmd::Optimize(a) => (Command::Optimize, a),
        Cmd::Continuation(a) => (Command::Continuation, a),
    };
    let opts = RunOptions {
        seed_override: args.seed,
        no_warm_start: args.no_warm_start,
    };
    match run_command(command, &args.config, &args.out, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("fotinv {}: {err}", command.name());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
