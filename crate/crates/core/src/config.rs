//! Simulation configuration, one table per model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::battery::{BatteryParams, ThermalParams};
use crate::drive_cycle::VehicleParams;
use crate::error::{Error, Result};
use crate::fuzzy::FuzzyConfig;
use crate::life::FadeParams;
use crate::sg_filter::FilterConfig;
use crate::supercap::SupercapParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Hess,
    SingleEss,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Hess => "hess",
            Mode::SingleEss => "single_ess",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hess" => Ok(Mode::Hess),
            "single_ess" | "single-ess" => Ok(Mode::SingleEss),
            other => Err(format!("unknown mode `{other}` (expected hess or single_ess)")),
        }
    }
}

/// Which battery-power series feeds the smoothing history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistorySource {
    /// Output of the rule-based selection, before limit re-dispatch.
    #[default]
    Commanded,
    /// Raw fuzzy command `K_bat·P_req`.
    Raw,
    /// Battery power after limit re-dispatch.
    Dispatched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub mode: Mode,
    pub soc_bat_init: f64,
    pub soc_sc_init: f64,
    /// Initial battery temperature, K; ambient when absent.
    pub temp_init: Option<f64>,
    pub history_source: HistorySource,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { mode: Mode::Hess, soc_bat_init: 0.9, soc_sc_init: 0.8, temp_init: None, history_source: HistorySource::Commanded }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// δI histogram bin width, A.
    pub delta_i_bin: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self { delta_i_bin: 5.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub simulation: SimulationSection,
    pub vehicle: VehicleParams,
    pub battery: BatteryParams,
    pub thermal: ThermalParams,
    pub supercap: SupercapParams,
    pub fuzzy: FuzzyConfig,
    pub filter: FilterConfig,
    pub life: FadeParams,
    pub analysis: AnalysisConfig,
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. A relative `fuzzy.rule_file` is resolved against
    /// the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(rule), Some(dir)) = (cfg.fuzzy.rule_file.as_ref(), path.parent()) {
            if rule.is_relative() {
                cfg.fuzzy.rule_file = Some(dir.join(rule));
            }
        }
        Ok(cfg)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.simulation.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.battery.validate()?;
        self.thermal.validate()?;
        self.supercap.validate()?;
        self.filter.validate()?;
        self.life.validate()?;
        let sim = &self.simulation;
        if !(sim.soc_bat_init >= self.battery.soc_min && sim.soc_bat_init <= self.battery.soc_max) {
            return Err(Error::InvalidParameter {
                name: "simulation.soc_bat_init",
                reason: format!("must lie in [{}, {}], got {}", self.battery.soc_min, self.battery.soc_max, sim.soc_bat_init),
            });
        }
        if !(0.0..=1.0).contains(&sim.soc_sc_init) {
            return Err(Error::InvalidParameter { name: "simulation.soc_sc_init", reason: format!("must lie in [0, 1], got {}", sim.soc_sc_init) });
        }
        if let Some(t) = sim.temp_init {
            if !(t > 0.0) {
                return Err(Error::InvalidParameter { name: "simulation.temp_init", reason: format!("must be positive kelvin, got {t}") });
            }
        }
        if !(self.fuzzy.p_norm > 0.0) {
            return Err(Error::InvalidParameter { name: "fuzzy.p_norm", reason: format!("must be positive, got {}", self.fuzzy.p_norm) });
        }
        if !(self.analysis.delta_i_bin > 0.0) {
            return Err(Error::InvalidParameter { name: "analysis.delta_i_bin", reason: "must be positive".into() });
        }
        Ok(())
    }

    pub fn initial_temp(&self) -> f64 {
        self.simulation.temp_init.unwrap_or(self.thermal.t_ambient)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default() {
        assert_eq!(SimConfig::from_toml_str("").unwrap(), SimConfig::default());
    }

    #[test]
    fn partial_tables_override() {
        let cfg = SimConfig::from_toml_str("[simulation]\nmode = \"single_ess\"\n[battery]\nr_ohm = 0.05\n").unwrap();
        assert_eq!(cfg.simulation.mode, Mode::SingleEss);
        assert_eq!(cfg.battery.r_ohm, 0.05);
        assert_eq!(cfg.battery.u_oc, 330.0);
    }

    #[test]
    fn unknown_keys_and_bad_values_fail() {
        assert!(SimConfig::from_toml_str("[battery]\nr_ohms = 0.05\n").is_err());
        assert!(SimConfig::from_toml_str("[supercap]\nu_min = 300\n").is_err());
        assert!(SimConfig::from_toml_str("[simulation]\nsoc_bat_init = 0.01\n").is_err());
    }
}
