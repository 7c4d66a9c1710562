//! Command-line front end. Every subcommand reads flags first, then an
//! optional JSON config file, then built-in defaults, writes its artifacts
//! under the output directory, and prints a one-line summary. Exit codes:
//! 0 success, 1 invalid input, 2 numerical failure.

mod commands;
mod netcfg;

use basslab_core::{Error, Result};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "basslab", version, about = "Numerical lab for discrete Bass diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a large-population limit curve.
    Compartmental(commands::CompartmentalArgs),
    /// Solve exact survival systems: reduced, truncated limit, or full.
    Master(commands::MasterArgs),
    /// Monte Carlo replicates of the adoption process on a network.
    Simulate(commands::SimulateArgs),
    /// Sweep population sizes and fit the convergence rate to the limit.
    Converge(commands::ConvergeArgs),
    /// Compare heterogeneous-rate systems against homogenized ones.
    Hetero(commands::HeteroArgs),
    /// Integrate a truncated toy ladder with known closed forms.
    Toy(commands::ToyArgs),
    /// Verify the weighted-norm error estimate over a parameter sweep.
    Bound(commands::BoundArgs),
}

/// Resolves the worker budget (flag beats BASSLAB_THREADS beats default)
/// and sizes the global pool. Returns the requested budget for the
/// manifest; None means the library default.
pub(crate) fn init_workers(requested: Option<usize>) -> Result<Option<usize>> {
    let budget = match requested {
        Some(n) => Some(n),
        None => match std::env::var("BASSLAB_THREADS") {
            Err(_) => None,
            Ok(raw) => Some(raw.trim().parse::<usize>().map_err(|_| {
                Error::InvalidParameter(format!(
                    "BASSLAB_THREADS must be a positive integer, got {raw:?}"
                ))
            })?),
        },
    };
    if let Some(n) = budget {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "worker budget must be at least 1".into(),
            ));
        }
        // A second configuration attempt in one process is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(budget)
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            err.print().expect("stderr is writable");
            std::process::exit(code);
        }
    };
    let outcome = match cli.command {
        Command::Compartmental(args) => commands::run_compartmental(args),
        Command::Master(args) => commands::run_master(args),
        Command::Simulate(args) => commands::run_simulate(args),
        Command::Converge(args) => commands::run_converge(args),
        Command::Hetero(args) => commands::run_hetero(args),
        Command::Toy(args) => commands::run_toy(args),
        Command::Bound(args) => commands::run_bound(args),
    };
    match outcome {
        Ok(summary) => println!("{summary}"),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(if err.is_numerical() { 2 } else { 1 });
        }
    }
}
