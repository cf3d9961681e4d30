//! Energy management: per-step power split and whole-cycle simulation.
//!
//! Each step runs demand power → fuzzy share → Savitzky-Golay model
//! selection on the battery-power history → rule-based gate → limit
//! re-dispatch, then advances both plant models.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::battery::{self, BatteryParams, BatteryState};
use crate::config::{HistorySource, Mode, SimConfig};
use crate::drive_cycle::{demand_power, DriveCycle};
use crate::error::{Error, Result};
use crate::fuzzy::FuzzyRuleBase;
use crate::life::{estimate_from_trace, LifeEstimate};
use crate::sg_filter::{rule_select, Abscissa, FilterConfig, Provenance};
use crate::supercap::{self, sc_power_limits, sc_soc, SupercapParams, SupercapState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitTag {
    Filtered,
    FuzzyFallback,
    ConstraintRedispatch,
    SingleEss,
}

impl SplitTag {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitTag::Filtered => "filtered",
            SplitTag::FuzzyFallback => "fuzzy-fallback",
            SplitTag::ConstraintRedispatch => "constraint-redispatch",
            SplitTag::SingleEss => "single-ess",
        }
    }
}

impl From<Provenance> for SplitTag {
    fn from(p: Provenance) -> Self {
        match p {
            Provenance::Filtered => SplitTag::Filtered,
            Provenance::FuzzyFallback => SplitTag::FuzzyFallback,
        }
    }
}

/// One dispatch decision at the bus. `p_bat + p_sc + curtailed = p_req`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSplit {
    pub t: f64,
    pub p_req: f64,
    pub k_bat: f64,
    pub p_bat: f64,
    pub p_sc: f64,
    pub tag: SplitTag,
    pub bat_saturated: bool,
    pub sc_saturated: bool,
    /// Demand neither device could take, W (zero unless both saturated).
    pub curtailed: f64,
}

/// Power each device can deliver or absorb over the next step, as
/// non-negative bus-side magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispatchLimits {
    pub bat_discharge: f64,
    pub bat_charge: f64,
    pub sc_discharge: f64,
    pub sc_charge: f64,
}

impl DispatchLimits {
    pub fn unlimited() -> Self {
        Self { bat_discharge: f64::INFINITY, bat_charge: f64::INFINITY, sc_discharge: f64::INFINITY, sc_charge: f64::INFINITY }
    }

    pub fn compute(bat: &BatteryState, bat_params: &BatteryParams, sc: &SupercapState, sc_params: &SupercapParams, dt: f64) -> Self {
        let v = bat.effective_voltage(bat_params);
        let r = bat_params.r_ohm;
        let i_max = bat_params.i_max;
        let bat_discharge = if bat.soc <= bat_params.soc_min || v <= 0.0 {
            0.0
        } else {
            let i = i_max.min(v / (2.0 * r));
            i * (v - r * i)
        };
        let bat_charge = if bat.soc >= bat_params.soc_max || v <= 0.0 { 0.0 } else { i_max * (v + r * i_max) };
        let sc = sc_power_limits(sc, sc_params, dt);
        Self { bat_discharge, bat_charge, sc_discharge: sc.discharge, sc_charge: sc.charge }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Redispatch {
    pub p_bat: f64,
    pub p_sc: f64,
    pub bat_saturated: bool,
    pub sc_saturated: bool,
    pub curtailed: f64,
}

/// Moves power between the devices so each stays inside its limits.
///
/// Traction: the supercapacitor share is clipped first and any deficit moves
/// to the battery, then back to the supercapacitor if the battery clips.
/// Regeneration goes to the supercapacitor first and the remainder charges
/// the battery. Whatever neither can take is curtailed.
pub fn redispatch(p_bat: f64, p_sc: f64, limits: &DispatchLimits) -> Redispatch {
    let p_req = p_bat + p_sc;
    let clamp_sc = |p: f64| p.clamp(-limits.sc_charge, limits.sc_discharge);
    let clamp_bat = |p: f64| p.clamp(-limits.bat_charge, limits.bat_discharge);

    let (bat, sc) = if p_req < 0.0 {
        let sc = clamp_sc(p_req);
        let bat = clamp_bat(p_req - sc);
        (bat, sc)
    } else {
        let sc = clamp_sc(p_sc);
        let bat = clamp_bat(p_req - sc);
        let sc = if bat != p_req - sc { clamp_sc(p_req - bat) } else { sc };
        (bat, sc)
    };
    let (bat, sc) = if bat == p_bat && sc == p_sc { (p_bat, p_sc) } else { (bat, sc) };
    let curtailed = p_req - bat - sc;
    Redispatch {
        p_bat: bat,
        p_sc: sc,
        bat_saturated: bat == limits.bat_discharge || bat == -limits.bat_charge,
        sc_saturated: sc == limits.sc_discharge || sc == -limits.sc_charge,
        curtailed: if curtailed.abs() <= 1e-9 * p_req.abs().max(1.0) { 0.0 } else { curtailed },
    }
}

/// Stateful controller: holds the rule base and the battery-power history.
#[derive(Debug, Clone)]
pub struct EmsController {
    mode: Mode,
    rules: FuzzyRuleBase,
    p_norm: f64,
    filter: FilterConfig,
    history_source: HistorySource,
    history: VecDeque<f64>,
}

impl EmsController {
    pub fn new(cfg: &SimConfig, rules: FuzzyRuleBase) -> Self {
        Self {
            mode: cfg.simulation.mode,
            rules,
            p_norm: cfg.fuzzy.p_norm,
            filter: cfg.filter.clone(),
            history_source: cfg.simulation.history_source,
            history: VecDeque::with_capacity(cfg.filter.max_window() + 1),
        }
    }

    pub fn history(&self) -> &VecDeque<f64> {
        &self.history
    }

    /// Splits `p_req` for the given device states and limits.
    pub fn split_step(&mut self, t: f64, p_req: f64, soc_bat: f64, soc_sc: f64, limits: &DispatchLimits) -> Result<PowerSplit> {
        if self.mode == Mode::SingleEss {
            let r = redispatch(p_req, 0.0, &DispatchLimits { sc_discharge: 0.0, sc_charge: 0.0, ..*limits });
            return Ok(PowerSplit {
                t,
                p_req,
                k_bat: 1.0,
                p_bat: r.p_bat,
                p_sc: 0.0,
                tag: SplitTag::SingleEss,
                bat_saturated: r.bat_saturated,
                sc_saturated: false,
                curtailed: r.curtailed,
            });
        }

        let k_bat = self.rules.evaluate(p_req / self.p_norm, soc_bat, soc_sc);
        let raw = k_bat * p_req;

        let mut window: Vec<f64> = self.history.iter().copied().collect();
        window.push(raw);
        let (mode1, mode2) = self.filter.fit_trailing(&window)?;
        let (commanded, provenance) = rule_select(raw, mode1.as_ref(), mode2.as_ref(), p_req, Abscissa::Latest);

        let r = redispatch(commanded, p_req - commanded, limits);
        let moved = r.p_bat != commanded;
        let tag = if moved || r.curtailed != 0.0 { SplitTag::ConstraintRedispatch } else { provenance.into() };

        let remembered = match self.history_source {
            HistorySource::Commanded => commanded,
            HistorySource::Raw => raw,
            HistorySource::Dispatched => r.p_bat,
        };
        self.history.push_back(remembered);
        while self.history.len() >= self.filter.max_window() {
            self.history.pop_front();
        }

        Ok(PowerSplit {
            t,
            p_req,
            k_bat,
            p_bat: r.p_bat,
            p_sc: r.p_sc,
            tag,
            bat_saturated: r.bat_saturated,
            sc_saturated: r.sc_saturated,
            curtailed: r.curtailed,
        })
    }
}

/// Per-step record of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub split: PowerSplit,
    /// m/s
    pub speed: f64,
    pub i_bat: f64,
    pub i_sc: f64,
    pub u_bat: f64,
    pub u_sc: f64,
    pub soc_bat: f64,
    pub soc_sc: f64,
    /// K
    pub temp: f64,
    /// Cumulative battery loss, J.
    pub q_bat_loss: f64,
    /// Cumulative supercapacitor loss, J.
    pub q_sc_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub cycle_name: String,
    pub mode: Mode,
    pub config: SimConfig,
    pub initial_battery: BatteryState,
    pub initial_supercap: SupercapState,
    pub final_battery: BatteryState,
    pub final_supercap: SupercapState,
    /// One record per cycle sample; row 0 is the initial state.
    pub steps: Vec<StepRecord>,
    pub life: LifeEstimate,
    pub warnings: Vec<String>,
}

impl SimulationReport {
    pub fn battery_currents(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.i_bat).collect()
    }
}

/// Loads the rule base named in the config, or the shipped one.
pub fn load_rules(cfg: &SimConfig) -> Result<FuzzyRuleBase> {
    match &cfg.fuzzy.rule_file {
        Some(path) => FuzzyRuleBase::parse(&std::fs::read_to_string(path)?),
        None => Ok(FuzzyRuleBase::default_rules()),
    }
}

pub fn run_simulation(cycle: &DriveCycle, cfg: &SimConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let rules = load_rules(cfg)?;
    run_simulation_with(cycle, cfg, rules)
}

/// Steps the whole cycle. Sample `k ≥ 1` applies its demand over
/// `(t_{k−1}, t_k]`; sample 0 is dispatched but no time elapses.
pub fn run_simulation_with(cycle: &DriveCycle, cfg: &SimConfig, rules: FuzzyRuleBase) -> Result<SimulationReport> {
    cfg.validate()?;
    let demand = demand_power(cycle, &cfg.vehicle);
    let bat_params = &cfg.battery;
    let sc_params = &cfg.supercap;
    let thermal = &cfg.thermal;
    let mode = cfg.simulation.mode;

    let mut warnings = Vec::new();
    let samples = cycle.samples();
    let max_dt = samples.windows(2).map(|w| w[1].time - w[0].time).fold(0.0, f64::max);
    if max_dt >= bat_params.tau() {
        warnings.push(format!("step {max_dt} s is not below the battery polarization time constant {} s", bat_params.tau()));
    }
    if mode == Mode::Hess && max_dt > sc_params.fastest_time_constant() {
        warnings.push(format!(
            "step {max_dt} s exceeds the supercapacitor branch time constant {:.3} s",
            sc_params.fastest_time_constant()
        ));
    }

    let mut bat = BatteryState::new(cfg.simulation.soc_bat_init, cfg.initial_temp());
    let mut sc = SupercapState::at_soc(sc_params, cfg.simulation.soc_sc_init);
    let initial_battery = bat;
    let initial_supercap = sc;
    let mut controller = EmsController::new(cfg, rules);
    let mut steps = Vec::with_capacity(samples.len());
    let mut dts = Vec::with_capacity(samples.len());

    let dump = |bat: &BatteryState, sc: &SupercapState| format!("battery={bat:?} supercap={sc:?}");

    for (k, d) in demand.samples.iter().enumerate() {
        let dt = if k == 0 { 0.0 } else { d.time - samples[k - 1].time };
        let limit_dt = if k == 0 { samples[1].time - samples[0].time } else { dt };
        let limits = match mode {
            Mode::Hess => DispatchLimits::compute(&bat, bat_params, &sc, sc_params, limit_dt),
            Mode::SingleEss => DispatchLimits { sc_discharge: 0.0, sc_charge: 0.0, ..DispatchLimits::compute(&bat, bat_params, &sc, sc_params, limit_dt) },
        };
        let soc_sc_now = sc_soc(&sc, sc_params);
        let abort = |source: Error, bat: &BatteryState, sc: &SupercapState| Error::Aborted { step: k, source: Box::new(source), state: dump(bat, sc) };

        let split = controller
            .split_step(d.time, d.power, bat.soc, soc_sc_now, &limits)
            .map_err(|e| abort(e, &bat, &sc))?;

        let i_bat = battery::current_from_power(&bat, bat_params, split.p_bat).map_err(|e| abort(e, &bat, &sc))?.amps;
        let i_sc = if split.p_sc == 0.0 {
            0.0
        } else {
            supercap::sc_current_from_power(&sc, sc_params, split.p_sc).map_err(|e| abort(e, &bat, &sc))?.amps
        };
        let u_bat = bat.terminal_voltage(bat_params, i_bat);
        let u_sc = supercap::sc_terminal_voltage(&sc, sc_params, i_sc);

        if dt > 0.0 {
            bat = battery::advance(&bat, bat_params, thermal, i_bat, dt).state;
            if mode == Mode::Hess {
                sc = supercap::sc_step(&sc, sc_params, i_sc, dt);
            }
        }

        dts.push(dt);
        steps.push(StepRecord {
            split,
            speed: d.speed,
            i_bat,
            i_sc,
            u_bat,
            u_sc,
            soc_bat: bat.soc,
            soc_sc: sc_soc(&sc, sc_params),
            temp: bat.temp,
            q_bat_loss: bat.q_loss_acc,
            q_sc_loss: sc.q_loss_acc,
        });
    }

    let currents: Vec<f64> = steps.iter().map(|s| s.i_bat).collect();
    // each interval's current is the one recorded at its closing sample
    let temps: Vec<f64> = steps.iter().map(|s| s.temp).collect();
    let life = estimate_from_trace(&cfg.life, bat_params.q_rated, &currents, &temps, &dts);

    Ok(SimulationReport {
        cycle_name: cycle.name.clone(),
        mode,
        config: cfg.clone(),
        initial_battery,
        initial_supercap,
        final_battery: bat,
        final_supercap: sc,
        steps,
        life,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn limits() -> DispatchLimits {
        DispatchLimits { bat_discharge: 60e3, bat_charge: 40e3, sc_discharge: 25e3, sc_charge: 25e3 }
    }

    #[test]
    fn redispatch_identity_within_limits() {
        let r = redispatch(10e3, 5e3, &limits());
        assert_eq!((r.p_bat, r.p_sc, r.curtailed), (10e3, 5e3, 0.0));
        assert!(!r.bat_saturated && !r.sc_saturated);
    }

    #[test]
    fn redispatch_moves_sc_deficit_to_battery() {
        let r = redispatch(10e3, 30e3, &limits());
        assert_eq!(r.p_sc, 25e3);
        assert_eq!(r.p_bat, 15e3);
        assert!(r.sc_saturated);
    }

    #[test]
    fn redispatch_regen_goes_to_sc_first() {
        let r = redispatch(-4e3, -6e3, &DispatchLimits { sc_charge: 10e3, ..limits() });
        assert_eq!((r.p_bat, r.p_sc), (0.0, -10e3));
        let r = redispatch(0.0, -30e3, &limits());
        assert_eq!((r.p_bat, r.p_sc), (-5e3, -25e3));
    }

    #[test]
    fn redispatch_curtails_when_both_saturate() {
        let r = redispatch(70e3, 30e3, &limits());
        assert_eq!((r.p_bat, r.p_sc), (60e3, 25e3));
        assert_relative_eq!(r.curtailed, 15e3);
        let r = redispatch(-50e3, -30e3, &limits());
        assert_eq!((r.p_bat, r.p_sc), (-40e3, -25e3));
        assert_relative_eq!(r.curtailed, -15e3);
    }

    #[test]
    fn battery_deficit_returns_to_sc() {
        let r = redispatch(80e3, 0.0, &limits());
        assert_eq!((r.p_bat, r.p_sc, r.curtailed), (60e3, 20e3, 0.0));
    }

    #[test]
    fn single_ess_split() {
        let cfg = SimConfig::default().with_mode(Mode::SingleEss);
        let mut c = EmsController::new(&cfg, FuzzyRuleBase::default_rules());
        let s = c.split_step(0.0, 20e3, 0.9, 0.5, &DispatchLimits::unlimited()).unwrap();
        assert_eq!((s.k_bat, s.p_bat, s.p_sc, s.tag), (1.0, 20e3, 0.0, SplitTag::SingleEss));
    }

    #[test]
    fn warm_up_uses_raw_fuzzy_command() {
        let cfg = SimConfig::default();
        let mut c = EmsController::new(&cfg, FuzzyRuleBase::default_rules());
        let s = c.split_step(0.0, 20e3, 0.9, 0.8, &DispatchLimits::unlimited()).unwrap();
        assert_eq!(s.p_bat, s.k_bat * 20e3);
        assert_eq!(s.tag, SplitTag::FuzzyFallback);
        assert_eq!(s.p_bat + s.p_sc, 20e3);
    }

    #[test]
    fn empty_sc_forces_battery() {
        let cfg = SimConfig::default();
        let mut c = EmsController::new(&cfg, FuzzyRuleBase::default_rules());
        let lim = DispatchLimits { sc_discharge: 0.0, ..DispatchLimits::unlimited() };
        // soc_sc at 0.3 still gives the SC a share; the limit takes it away
        let s = c.split_step(0.0, 40e3, 0.9, 0.3, &lim).unwrap();
        assert_eq!((s.p_bat, s.p_sc, s.tag), (40e3, 0.0, SplitTag::ConstraintRedispatch));
    }

    #[test]
    fn history_is_bounded() {
        let cfg = SimConfig::default();
        let mut c = EmsController::new(&cfg, FuzzyRuleBase::default_rules());
        for k in 0..100 {
            c.split_step(k as f64, 10e3 + 100.0 * k as f64, 0.9, 0.8, &DispatchLimits::unlimited()).unwrap();
        }
        assert!(c.history().len() < cfg.filter.max_window());
    }

    #[test]
    fn zero_cycle_is_inert() {
        let cycle = DriveCycle::from_speeds("idle", 1.0, &[0.0; 30]).unwrap();
        let cfg = SimConfig::default();
        let report = run_simulation(&cycle, &cfg).unwrap();
        assert_eq!(report.steps.len(), 30);
        for s in &report.steps {
            assert_eq!((s.split.p_req, s.split.p_bat, s.split.p_sc), (0.0, 0.0, 0.0));
        }
        assert_eq!(report.final_battery.soc, cfg.simulation.soc_bat_init);
        assert_eq!(report.final_battery.q_loss_acc, 0.0);
        let (a, b) = (report.final_supercap, report.initial_supercap);
        assert_eq!(a.q_loss_acc, 0.0);
        assert!((a.u_b - b.u_b).abs() < 1e-9 && (a.u_s - b.u_s).abs() < 1e-9);
    }

    #[test]
    fn depleted_pack_aborts_with_step() {
        let mut cfg = SimConfig::default().with_mode(Mode::SingleEss);
        cfg.battery.c_bulk = 1.0;
        let cycle = DriveCycle::from_speeds("x", 1.0, &[0.0, 5.0, 10.0, 15.0, 20.0, 20.0, 20.0]).unwrap();
        match run_simulation(&cycle, &cfg) {
            Err(Error::Aborted { step, state, .. }) => {
                assert!(step >= 1);
                assert!(state.contains("battery="));
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }
}
