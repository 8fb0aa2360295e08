//! Command-line front end: feedforward maps, trajectories, low-power curves
//! and the charger scenario, all written as CSV.

pub mod config;
pub mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use dbsrc_core::sweep::{feedforward_map, lowpower_curves, trajectory};
use dbsrc_core::{run_scenario, Execution, ScenarioError};
use thiserror::Error;

pub use config::Settings;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("run aborted: {0}")]
    Runtime(String),
    #[error("output error: {0}")]
    Io(#[from] io::Error),
    #[error("output error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// The reader went away, as with `dbsrc map | head`.
    pub fn is_broken_pipe(&self) -> bool {
        let kind = match self {
            Self::Io(e) => Some(e.kind()),
            Self::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(e) => Some(e.kind()),
                _ => None,
            },
            _ => None,
        };
        kind == Some(io::ErrorKind::BrokenPipe)
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) | Self::Io(_) | Self::Csv(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "dbsrc",
    version,
    about = "Dual-bridge series resonant converter maps and charger simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Common {
    /// Flat `key = value` settings file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Override one setting; repeatable, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Evaluate `map` and `lowpower` grids on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Inverse map over a (sigma*, delta*) grid.
    Map,
    /// Open-loop feedforward along sinusoidal references.
    Trajectory,
    /// Power against extra short-time at maximum frequency.
    Lowpower,
    /// Closed-loop battery charger scenario.
    Charge {
        /// Keep every Nth control step.
        #[arg(long, value_name = "N")]
        decimate: Option<usize>,
        /// Run with an exact plant.
        #[arg(long)]
        no_uncertainty: bool,
    },
}

/// File, then `--set` overrides, then dedicated flags.
pub fn settings(cli: &Cli) -> Result<Settings, CliError> {
    let mut s = Settings::default();
    if let Some(path) = &cli.common.config {
        s.load_file(path)?;
    }
    for o in &cli.common.overrides {
        s.apply_override(o)?;
    }
    if cli.common.sequential {
        s.parallel = false;
    }
    if let Command::Charge {
        decimate,
        no_uncertainty,
    } = cli.command
    {
        if let Some(n) = decimate {
            s.scenario.decimate = n;
        }
        if no_uncertainty {
            s.uncertainty = false;
        }
    }
    Ok(s)
}

fn sink(out: &Option<PathBuf>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|e| {
            CliError::Config(format!("cannot create {}: {e}", path.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let s = settings(cli)?;
    let exec = s.execution();
    match cli.command {
        Command::Map => {
            let grid = s.map_grid()?;
            let rows = feedforward_map(&grid, exec);
            output::write_map(sink(&cli.common.out)?, &rows)
        }
        Command::Trajectory => {
            let spec = s.trajectory_spec()?;
            let rows = trajectory(&spec, Execution::Sequential);
            output::write_trajectory(sink(&cli.common.out)?, &rows)
        }
        Command::Lowpower => {
            let spec = s.lowpower_spec()?;
            let rows =
                lowpower_curves(&spec, exec).map_err(|e| CliError::Runtime(e.to_string()))?;
            output::write_lowpower(sink(&cli.common.out)?, &rows)
        }
        Command::Charge { .. } => {
            let cfg = s.scenario_config()?;
            let out = sink(&cli.common.out)?;
            match run_scenario(&cfg) {
                Ok(trace) => output::write_trace(out, &trace.rows),
                Err(ScenarioError::Config(msg)) => Err(CliError::Config(msg)),
                Err(e) => {
                    if let Some(trace) = e.partial_trace() {
                        output::write_trace(out, &trace.rows)?;
                    }
                    Err(CliError::Runtime(e.to_string()))
                }
            }
        }
    }
}
