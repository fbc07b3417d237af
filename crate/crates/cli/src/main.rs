//! `evacsim` command line: run one evacuation scenario or a whole
//! experiment matrix.
//!
//! Exit codes: 0 on success, 2 for usage or configuration problems
//! (unparseable flags, bad config keys, unreadable files), 1 for runtime
//! failures inside an otherwise well-formed simulation.

use clap::{Args, Parser, Subcommand};
use evacsim::building::{load_building, BuildingGraph};
use evacsim::comms::CommsMode;
use evacsim::config::ExperimentConfig;
use evacsim::experiment::{results_csv, run_matrix, write_outputs, RunRow};
use evacsim::sim::{run_scenario, Algorithm, Scenario};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "evacsim",
    version,
    about = "Deterministic building-evacuation simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single scenario and print its result as a CSV row
    Run(RunArgs),
    /// Run a scenario matrix and write results.csv plus summary.csv
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Building graph JSON file (may instead come from the config)
    #[arg(long)]
    building: Option<PathBuf>,
    /// Number of evacuees to scatter through the building
    #[arg(long)]
    evacuees: u32,
    /// Navigation policy: dijkstra, cpnst, or cpn-spf
    #[arg(long)]
    algorithm: Algorithm,
    /// Localization upload transport: direct3g or ahcpn
    #[arg(long)]
    comms: CommsMode,
    /// Seed for the run's random stream
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// JSON config overriding default parameters
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config holding parameter overrides and the experiment matrix
    #[arg(long)]
    config: Option<PathBuf>,
    /// Building graph JSON file (overrides the config's experiment.building)
    #[arg(long)]
    building: Option<PathBuf>,
    /// Directory that receives results.csv and summary.csv
    #[arg(long)]
    out: PathBuf,
}

enum CliError {
    /// Bad invocation or configuration — exit code 2.
    Usage(String),
    /// A well-formed run failed while executing — exit code 1.
    Run(String),
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig, CliError> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => ExperimentConfig::from_config_text(&read_file(p)?)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", p.display()))),
    }
}

/// Pick the building file: an explicit flag wins over the config key.
fn resolve_building(
    flag: Option<&Path>,
    cfg: &ExperimentConfig,
) -> Result<BuildingGraph, CliError> {
    let path = flag
        .or(cfg.building.as_deref())
        .ok_or_else(|| {
            CliError::Usage(
                "no building given: pass --building or set experiment.building in the config"
                    .to_string(),
            )
        })?;
    load_building(&read_file(path)?)
        .map_err(|e| CliError::Usage(format!("building {}: {e}", path.display())))
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let graph = resolve_building(args.building.as_deref(), &cfg)?;
    let scenario = Scenario {
        evacuee_count: args.evacuees,
        algorithm: args.algorithm,
        comms: args.comms,
        seed: args.seed,
    };
    let metrics = run_scenario(&graph, &cfg.params, scenario)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let row = RunRow { scenario, metrics };
    print!("{}", results_csv(std::slice::from_ref(&row)));
    Ok(())
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<(), CliError> {
    let cfg = load_config(args.config.as_deref())?;
    let graph = resolve_building(args.building.as_deref(), &cfg)?;
    let rows = run_matrix(&graph, &cfg).map_err(|e| CliError::Run(e.to_string()))?;
    let (results, summary) = write_outputs(&args.out, &rows)
        .map_err(|e| CliError::Run(format!("writing {}: {e}", args.out.display())))?;
    println!("wrote {} ({} runs)", results.display(), rows.len());
    println!(
        "wrote {} ({} cells)",
        summary.display(),
        evacsim::experiment::summarize(&rows).len()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Experiment(args) => cmd_experiment(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
