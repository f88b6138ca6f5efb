use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qnd_cli::output::read_cycles;
use qnd_cli::{commands, parse_config, parse_sweep_config, CliError};

/// Rate-equation simulation of repeated QND spin readout.
#[derive(Parser)]
#[command(name = "qndsim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a protocol and write the trajectory and cycle tables.
    Simulate(RunArgs),
    /// Fit flip rates to a pair of cycle tables or to runs generated from a config.
    Fit(FitArgs),
    /// Tabulate a selection-rule weight over a field/anisotropy grid.
    Sweep(RunArgs),
    /// List the built-in rate presets.
    Presets,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set protocol.cycles=200`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for sweeps (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Scenario file; both initial states are simulated.
    #[arg(long, conflicts_with_all = ["up", "down"], required_unless_present_all = ["up", "down"])]
    config: Option<PathBuf>,
    #[arg(long = "set", value_name = "KEY=VALUE", requires = "config")]
    set: Vec<String>,
    /// Cycle table started from data ↑.
    #[arg(long, requires = "down")]
    up: Option<PathBuf>,
    /// Cycle table started from data ↓.
    #[arg(long, requires = "up")]
    down: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<String, CliError> {
    match cli.command {
        Command::Simulate(a) => commands::simulate(&parse_config(&read(&a.config)?, &a.set)?, &a.out),
        Command::Sweep(a) => commands::sweep(&parse_sweep_config(&read(&a.config)?, &a.set)?, &a.out, a.jobs),
        Command::Fit(a) => match (a.config, a.up, a.down) {
            (Some(c), _, _) => commands::fit_from_config(&parse_config(&read(&c)?, &a.set)?),
            (None, Some(up), Some(down)) => commands::fit_from_series(&read_cycles(&up)?, &read_cycles(&down)?),
            _ => unreachable!("clap enforces the argument groups"),
        },
        Command::Presets => Ok(commands::presets()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("qndsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
