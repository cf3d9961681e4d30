//! Battery + supercapacitor hybrid energy storage simulation.
//!
//! A drive cycle is turned into bus demand power, split between a PNGV
//! battery pack and a two-branch RC supercapacitor bank by a fuzzy
//! controller whose battery command is smoothed with Savitzky-Golay fits,
//! and then summarized into losses, current stress, temperature and an
//! Arrhenius cycle-life estimate.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod battery;
pub mod config;
pub mod drive_cycle;
pub mod ems;
pub mod error;
pub mod fuzzy;
pub mod life;
pub mod sg_filter;
pub mod supercap;

pub use analysis::{compare, summarize, ComparisonReport, MetricsBlock};
pub use config::{Mode, SimConfig};
pub use drive_cycle::{load_cycle, DriveCycle, SpeedUnit};
pub use ems::{run_simulation, SimulationReport};
pub use error::{Error, Result};
pub use fuzzy::FuzzyRuleBase;
