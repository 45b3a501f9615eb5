use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pendulum_cli::config::{load_config, CaseSelection, Mode, Overrides, DEFAULT_OUT};
use pendulum_cli::run::{max_jobs, run_batch, write_validation_failure, ExitStatus};

/// Simulate, optimally control, and measure the geometric phase of a 3D pendulum.
#[derive(Parser)]
#[command(name = "pendulum3d", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Propagate the discrete dynamics from an initial state.
    Simulate(RunArgs),
    /// Solve a minimum-effort maneuver by shooting.
    Solve(RunArgs),
    /// Evaluate the geometric phase of a stored trajectory.
    Phase(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Multiplier initialization seed (overrides the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Built-in case: i, ii, iii, iv or all (overrides the config).
    #[arg(long)]
    case: Option<CaseSelection>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { ExitStatus::Validation.code() as u8 } else { 0 });
        }
    };
    let (mode, args) = match cli.command {
        Command::Simulate(a) => (Mode::Simulate, a),
        Command::Solve(a) => (Mode::Solve, a),
        Command::Phase(a) => (Mode::Phase, a),
    };
    let overrides = Overrides { mode: Some(mode), case: args.case, seed: args.seed, out: args.out.clone() };

    let configs = match load_config(&args.config, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            let out = args.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
            if let Err(io) = write_validation_failure(&out, mode, &e) {
                eprintln!("error: {io:#}");
            }
            return ExitCode::from(ExitStatus::Validation.code() as u8);
        }
    };

    let mut worst = ExitStatus::Success;
    for outcome in run_batch(&configs, max_jobs()) {
        match outcome {
            Ok(o) => {
                let mut line = format!("{}: {}", o.out.display(), o.summary.status);
                if let Some(cost) = o.summary.cost {
                    line += &format!(", J = {cost:.6}");
                }
                if let Some(theta) = o.summary.theta_geo {
                    line += &format!(", theta_geo = {theta:.6}");
                }
                if let Some(msg) = &o.summary.message {
                    line += &format!(" ({msg})");
                }
                println!("{line}");
                worst = worst.max(o.status);
            }
            Err(e) => {
                eprintln!("error: {e:#}");
                return ExitCode::FAILURE;
            }
        }
    }
    ExitCode::from(worst.code() as u8)
}
