mod commands;
mod setup;

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use commands::{CounterfactualArgs, EvalArgs, RenderArgs, ReplayArgs, RunArgs};
use setup::Usage;

/// Replayable multi-agent simulations of historical conflicts.
#[derive(Debug, Parser)]
#[command(name = "warsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Execute one simulation into a run directory
    Run(RunArgs),
    /// Execute N seeded runs of a patched scenario and write a manifest
    Counterfactual(CounterfactualArgs),
    /// Score runs against a scenario's ground truth
    Eval(EvalArgs),
    /// Print or write board grids with their narrative translation
    Render(RenderArgs),
    /// Check a run log, then re-execute it from the recorded cache
    Replay(ReplayArgs),
}

/// Error chain joined with ": ", skipping causes the previous message
/// already ends with.
fn chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.ends_with(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Counterfactual(a) => commands::counterfactual(a),
        Command::Eval(a) => commands::eval(a),
        Command::Render(a) => commands::render(a),
        Command::Replay(a) => commands::replay(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", chain(&e));
            if e.downcast_ref::<Usage>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
