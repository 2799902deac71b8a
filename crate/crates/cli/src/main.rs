//! Command-line front end for the planning benchmark: single-mode
//! batches, paired mode comparisons, and detector noise sweeps.
//!
//! Exit codes: 0 on success, 1 for configuration problems (bad scenario,
//! unknown mode, invalid parameters), 2 for I/O failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chance_rrt::harness::{
    emit_report, emit_sweep, sense_sweep, summarize, sweep_csv, ModeResult, SweepConfig,
};
use chance_rrt::perception::SensorNoiseProfile;
use chance_rrt::planner::Mode;
use chance_rrt::scenario::ScenarioConfig;
use chance_rrt::{Error, Result};

#[derive(Parser)]
#[command(
    name = "chance-rrt",
    version,
    about = "Risk-bounded motion planning benchmark harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario in one planning mode and write a report.
    Run(RunArgs),
    /// Run one scenario in several modes with paired trial seeds.
    Compare(CompareArgs),
    /// Measure fused detector uncertainty over a distance/azimuth grid.
    SenseSweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Planning mode: pu, cc, or cl.
    #[arg(long)]
    mode: String,
    /// Override the scenario's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the scenario's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    /// Comma-separated planning modes.
    #[arg(long, default_value = "pu,cc,cl")]
    modes: String,
    /// Override the scenario's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Override the scenario's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sensor noise profile JSON file.
    #[arg(long)]
    profile: PathBuf,
    /// Frames sensed per grid cell.
    #[arg(long)]
    frames: Option<usize>,
    /// Sweep base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
}

fn load_scenario(path: &Path, trials: Option<usize>, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = ScenarioConfig::load(path)?;
    if let Some(t) = trials {
        cfg.trials = t;
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(args: &RunArgs) -> Result<()> {
    let cfg = load_scenario(&args.scenario, args.trials, args.seed)?;
    let mode = Mode::parse(&args.mode)?;
    let scene = cfg.clone().into_runtime(mode)?;
    let result = summarize(&scene)?;
    emit_report(&cfg, std::slice::from_ref(&result), &args.out)?;
    print!(
        "{}",
        chance_rrt::harness::emit_metrics_csv(std::slice::from_ref(&result))
    );
    Ok(())
}

fn compare(args: &CompareArgs) -> Result<()> {
    let cfg = load_scenario(&args.scenario, args.trials, args.seed)?;
    let mut results: Vec<ModeResult> = Vec::new();
    for token in args.modes.split(',') {
        let token = token.trim();
        if token.is_empty() {
            continue;
        }
        let mode = Mode::parse(token)?;
        let scene = cfg.clone().into_runtime(mode)?;
        results.push(summarize(&scene)?);
    }
    if results.is_empty() {
        return Err(Error::Scenario("no modes given".into()));
    }
    emit_report(&cfg, &results, &args.out)?;
    print!("{}", chance_rrt::harness::emit_metrics_csv(&results));
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.profile)?;
    let profile: SensorNoiseProfile = serde_json::from_str(&text)
        .map_err(|e| Error::Scenario(format!("sensor profile: {e}")))?;
    profile.validate()?;
    let mut cfg = SweepConfig {
        profile,
        ..SweepConfig::default()
    };
    if let Some(f) = args.frames {
        cfg.frames = f;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let cells = sense_sweep(&cfg)?;
    emit_sweep(&cells, &args.out)?;
    print!("{}", sweep_csv(&cells));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(args),
        Command::Compare(args) => compare(args),
        Command::SenseSweep(args) => sweep(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
