//! `gradflow`: runs the accuracy, energy, energy-gap and coarsening
//! experiments, single-step debug dumps and the invariant suite.
//!
//! Exit codes: 0 ok, 1 usage, 2 config, 3 solver, 4 invariant violation,
//! 5 I/O.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gradflow::harness::{self, InitialCondition, DEFAULT_R1};
use gradflow::model::{Flow, ForcingMode};

use commands::Context;
use config::{Defaults, FileConfig, Overrides};
use error::CliError;

/// Environment variable naming the default output root.
const OUT_ENV: &str = "GRADFLOW_OUT";

#[derive(Debug, Parser)]
#[command(name = "gradflow", version, about = "Energy-stable gradient-flow solver experiments")]
struct Cli {
    /// Output root; defaults to $GRADFLOW_OUT, then ./runs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for dt sweeps.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Run label used in the output directory name instead of a timestamp.
    #[arg(long, global = true)]
    label: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Manufactured-solution error and observed order over a dt sweep.
    Accuracy(Overrides),
    /// Modified-energy traces, one CSV per dt.
    Energy(Overrides),
    /// Modified-vs-original energy gap and auxiliary drift at T.
    EnergyGap(Overrides),
    /// Cahn-Hilliard coarsening run with snapshots and component counts.
    Coarsen(Overrides),
    /// One step on a small grid, dumping the block system and solution.
    StepDebug(Overrides),
    /// Fixed points, IEQ/SAV equivalence and mass conservation checks.
    Validate,
}

fn defaults(command: &Command) -> Defaults {
    let base = Defaults {
        flow: Flow::AllenCahn,
        forcing: None,
        ic: InitialCondition::Trig,
        dts: vec![0.1, 0.01, 0.001],
        t_end: 5.0,
        grid: 40,
        snapshot_every: None,
        components_every: None,
    };
    match command {
        Command::Accuracy(_) => Defaults {
            forcing: Some(ForcingMode::Analytic),
            ic: InitialCondition::Manufactured,
            dts: vec![0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125],
            t_end: 1.0,
            ..base
        },
        Command::EnergyGap(_) => Defaults {
            dts: vec![0.1, 0.05, 0.025, 0.0125, 0.00625],
            ..base
        },
        Command::Coarsen(_) => Defaults {
            flow: Flow::CahnHilliard,
            ic: InitialCondition::TwoCircles { r1: DEFAULT_R1 },
            dts: vec![0.001],
            t_end: 3.0,
            snapshot_every: Some(0.25),
            components_every: Some(10),
            ..base
        },
        Command::StepDebug(_) => Defaults {
            dts: vec![0.1],
            t_end: 0.1,
            grid: 4,
            ..base
        },
        Command::Energy(_) | Command::Validate => base,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let flags = match &cli.command {
        Command::Validate => return commands::validate(&harness::run_validation()),
        Command::Accuracy(f)
        | Command::Energy(f)
        | Command::EnergyGap(f)
        | Command::Coarsen(f)
        | Command::StepDebug(f) => f,
    };
    let file = match &flags.config {
        Some(name) => config::load(name)?,
        None => FileConfig::default(),
    };
    let rc = config::resolve(&file, flags, &defaults(&cli.command))?;
    let ctx = Context {
        out_root: cli
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs")),
        jobs: cli.jobs.max(1),
        label: cli.label.clone(),
    };
    let dir = match cli.command {
        Command::Accuracy(_) => commands::accuracy(&ctx, &rc),
        Command::Energy(_) => commands::energy(&ctx, &rc),
        Command::EnergyGap(_) => commands::energy_gap(&ctx, &rc),
        Command::Coarsen(_) => commands::coarsen(&ctx, &rc),
        Command::StepDebug(_) => commands::step_debug(&ctx, &rc),
        Command::Validate => unreachable!(),
    }?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gradflow: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
