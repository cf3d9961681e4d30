//! Command-line front end: `simulate`, `compare`, `sweep` and `filter-demo`.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hess_core::{Mode, SpeedUnit};

mod commands;
mod output;

pub use commands::run;
pub use output::SCHEMA_VERSION;

#[derive(Debug, Parser)]
#[command(name = "hess", version, about = "Battery + supercapacitor hybrid storage simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one drive cycle and write report.json and trace.csv.
    Simulate(SimulateArgs),
    /// Run a baseline and a candidate on the same cycle and write compare.json.
    Compare(CompareArgs),
    /// Size the supercapacitor bank for each monomer type and write sweep.csv.
    Sweep(SweepArgs),
    /// Smooth one CSV column with the windowed polynomial filter.
    FilterDemo(FilterDemoArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hess,
    #[value(name = "single_ess", alias = "single-ess")]
    SingleEss,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hess => Mode::Hess,
            ModeArg::SingleEss => Mode::SingleEss,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum UnitArg {
    Mps,
    Mph,
    Kmh,
}

impl From<UnitArg> for SpeedUnit {
    fn from(u: UnitArg) -> Self {
        match u {
            UnitArg::Mps => SpeedUnit::Mps,
            UnitArg::Mph => SpeedUnit::Mph,
            UnitArg::Kmh => SpeedUnit::Kmh,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct CycleArgs {
    /// Drive cycle CSV with header `time,speed`.
    #[arg(long)]
    pub cycle: PathBuf,
    #[arg(long, value_enum, default_value = "mps")]
    pub speed_unit: UnitArg,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// TOML config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub cycle: CycleArgs,
    /// Overrides `simulation.mode` from the config.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Write only the JSON report or only the CSV trace.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Baseline config; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Candidate config; the baseline config when omitted.
    #[arg(long)]
    pub config_b: Option<PathBuf>,
    #[command(flatten)]
    pub cycle: CycleArgs,
    /// Candidate cycle; must match the baseline cycle.
    #[arg(long)]
    pub cycle_b: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "single_ess")]
    pub baseline_mode: ModeArg,
    #[arg(long, value_enum, default_value = "hess")]
    pub candidate_mode: ModeArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub cycle: CycleArgs,
    /// Monomer CSV: `label,cell_voltage,cell_capacity[,cell_count]`.
    #[arg(long)]
    pub monomers: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct FilterDemoArgs {
    /// Any CSV with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Column to smooth.
    #[arg(long)]
    pub column: String,
    #[arg(long, default_value_t = 5)]
    pub half_width: usize,
    #[arg(long, default_value_t = 4)]
    pub max_order: usize,
    /// Order used for the trailing-window (Mode II) column.
    #[arg(long, default_value_t = 2)]
    pub mode2_order: usize,
    #[arg(long, value_delimiter = ',', default_value = "3,5,7")]
    pub mode2_half_widths: Vec<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Input {
        path: PathBuf,
        #[source]
        source: hess_core::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(#[source] hess_core::Error),
    #[error("{0}")]
    Simulation(#[source] hess_core::Error),
    #[error("{path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
}

impl CliError {
    pub(crate) fn input(path: &Path, source: hess_core::Error) -> Self {
        CliError::Input { path: path.to_path_buf(), source }
    }

    /// 1 for a simulation that aborted, 2 for bad input or configuration.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Simulation(_) => 1,
            _ => 2,
        }
    }
}
