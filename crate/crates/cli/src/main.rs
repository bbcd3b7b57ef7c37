//! `pmac`: runs power allocation experiments from scenario files.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use pmac::experiments::{list_experiments, run_scenario, RunOverrides, Scenario};
use pmac::Error;

#[derive(Parser)]
#[command(
    name = "pmac",
    version,
    about = "Power allocation games on parallel multiple access channels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a scenario JSON file.
    Run {
        scenario: PathBuf,
        /// Output directory (overrides the scenario's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed (overrides the scenario's seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of realizations (overrides the scenario and --paper-scale).
        #[arg(long)]
        realizations: Option<usize>,
        /// Use the full-scale realization count for the experiment.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Print the experiment catalog.
    List,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::List => print!("{}", list_experiments()),
        Command::Run {
            scenario,
            out,
            seed,
            realizations,
            paper_scale,
        } => {
            let parsed = match Scenario::load(&scenario) {
                Err(Error::ScenarioParse { line, column, message }) => {
                    anyhow::bail!("{}:{line}:{column}: {message}", scenario.display())
                }
                other => other.with_context(|| format!("loading {}", scenario.display()))?,
            };
            let overrides = RunOverrides {
                output_dir: out,
                seed,
                realizations,
                paper_scale,
            };
            let report = run_scenario(&parsed, &overrides).with_context(|| format!("running {}", parsed.name))?;
            for file in &report.files {
                println!("{}", file.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
