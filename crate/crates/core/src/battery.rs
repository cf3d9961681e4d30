//! PNGV equivalent-circuit battery pack.
//!
//! The circuit is an open-circuit source in series with an ohmic resistance,
//! one polarization RC pair and a bulk capacitance that integrates the load
//! current. Discharge current is positive. States advance once per
//! drive-cycle step with the current held constant over the step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryParams {
    /// Open-circuit voltage, V. Used when `ocv_table` is absent.
    pub u_oc: f64,
    /// Optional `[soc, volts]` pairs, linearly interpolated, sorted by SOC.
    pub ocv_table: Option<Vec<[f64; 2]>>,
    /// Ohmic resistance, Ω.
    pub r_ohm: f64,
    /// Polarization resistance, Ω.
    pub r_pol: f64,
    /// Polarization capacitance, F.
    pub c_pol: f64,
    /// Bulk capacitance, F.
    pub c_bulk: f64,
    /// Rated pack capacity, Ah.
    pub q_rated: f64,
    /// Parallel strings in the pack.
    pub n_parallel: u32,
    /// Coulomb efficiency. Applied to charge current in the SOC integral and
    /// to |U·I| in the loss sum.
    pub eta_coulomb: f64,
    /// Efficiency applied to discharge current in the SOC integral.
    pub eta_discharge: f64,
    /// Current limit for either direction, A.
    pub i_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            u_oc: 330.0,
            ocv_table: None,
            r_ohm: 0.08,
            r_pol: 0.02,
            c_pol: 1000.0,
            c_bulk: 20_000.0,
            q_rated: 40.0,
            n_parallel: 2,
            eta_coulomb: 0.85,
            eta_discharge: 1.0,
            i_max: 300.0,
            soc_min: 0.1,
            soc_max: 0.95,
        }
    }
}

impl BatteryParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("battery.u_oc", self.u_oc),
            ("battery.r_ohm", self.r_ohm),
            ("battery.r_pol", self.r_pol),
            ("battery.c_pol", self.c_pol),
            ("battery.c_bulk", self.c_bulk),
            ("battery.q_rated", self.q_rated),
            ("battery.i_max", self.i_max),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be positive, got {value}") });
            }
        }
        if self.n_parallel == 0 {
            return Err(Error::InvalidParameter { name: "battery.n_parallel", reason: "must be at least 1".into() });
        }
        for (name, eta) in [("battery.eta_coulomb", self.eta_coulomb), ("battery.eta_discharge", self.eta_discharge)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be in (0, 1], got {eta}") });
            }
        }
        if !(0.0..=1.0).contains(&self.soc_min) || !(0.0..=1.0).contains(&self.soc_max) || self.soc_min >= self.soc_max {
            return Err(Error::InvalidParameter {
                name: "battery.soc_min",
                reason: format!("need 0 <= soc_min < soc_max <= 1, got {} / {}", self.soc_min, self.soc_max),
            });
        }
        if let Some(table) = &self.ocv_table {
            if table.len() < 2 || table.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::InvalidParameter {
                    name: "battery.ocv_table",
                    reason: "needs at least two rows with strictly increasing SOC".into(),
                });
            }
        }
        Ok(())
    }

    /// Polarization time constant τ = R·C, s.
    pub fn tau(&self) -> f64 {
        self.r_pol * self.c_pol
    }

    pub fn open_circuit_voltage(&self, soc: f64) -> f64 {
        match &self.ocv_table {
            None => self.u_oc,
            Some(table) => interpolate(table, soc),
        }
    }
}

fn interpolate(table: &[[f64; 2]], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first[0] {
        return first[1];
    }
    if x >= last[0] {
        return last[1];
    }
    let idx = table.partition_point(|row| row[0] <= x);
    let [x0, y0] = table[idx - 1];
    let [x1, y1] = table[idx];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Lumped pack thermal model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalParams {
    /// J/K
    pub heat_capacity: f64,
    /// W/K
    pub h_conv: f64,
    /// K
    pub t_ambient: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        Self { heat_capacity: 30_000.0, h_conv: 5.0, t_ambient: 298.15 }
    }
}

impl ThermalParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("thermal.heat_capacity", self.heat_capacity),
            ("thermal.h_conv", self.h_conv),
            ("thermal.t_ambient", self.t_ambient),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be positive, got {value}") });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    pub soc: f64,
    /// Current through the polarization resistance, A.
    pub i_pol: f64,
    /// Voltage across the bulk capacitance, V.
    pub u_bulk: f64,
    /// K
    pub temp: f64,
    /// Accumulated loss, J.
    pub q_loss_acc: f64,
    /// |I| integrated over time, Ah.
    pub ah_throughput: f64,
    pub last_current: f64,
}

impl BatteryState {
    pub fn new(soc: f64, temp: f64) -> Self {
        Self { soc, i_pol: 0.0, u_bulk: 0.0, temp, q_loss_acc: 0.0, ah_throughput: 0.0, last_current: 0.0 }
    }

    /// Source voltage behind the ohmic resistance.
    pub fn effective_voltage(&self, params: &BatteryParams) -> f64 {
        params.open_circuit_voltage(self.soc) - self.u_bulk - params.r_pol * self.i_pol
    }

    pub fn terminal_voltage(&self, params: &BatteryParams, current: f64) -> f64 {
        self.effective_voltage(params) - params.r_ohm * current
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryCurrent {
    pub amps: f64,
    /// The requested power exceeded what the pack can deliver; `amps` is the
    /// maximum-power current.
    pub saturated: bool,
}

/// Current that makes the terminal power equal `power` (W, discharge positive).
///
/// Solves `r·I² − V·I + P = 0` for the smaller-magnitude root.
pub fn current_from_power(state: &BatteryState, params: &BatteryParams, power: f64) -> Result<BatteryCurrent> {
    let v_eff = state.effective_voltage(params);
    if v_eff <= 0.0 {
        return Err(Error::DepletedPack { v_eff });
    }
    Ok(solve_power_quadratic(v_eff, params.r_ohm, power))
}

/// Smaller root of `r·I² − v·I + p = 0`, written in the cancellation-free
/// form `2p / (v + √(v² − 4rp))`.
pub(crate) fn solve_power_quadratic(v: f64, r: f64, p: f64) -> BatteryCurrent {
    let disc = v * v - 4.0 * r * p;
    if disc < 0.0 {
        return BatteryCurrent { amps: v / (2.0 * r), saturated: true };
    }
    BatteryCurrent { amps: 2.0 * p / (v + disc.sqrt()), saturated: false }
}

/// Advances the polarization current and bulk voltage with the current held
/// constant over `dt` and books Ah throughput. The polarization RC uses its
/// exact step response, the bulk capacitance integrates directly.
pub fn battery_step(state: &BatteryState, params: &BatteryParams, current: f64, dt: f64) -> BatteryState {
    let tau = params.tau();
    if dt >= tau {
        log::warn!("battery step dt={dt} s is not below the polarization time constant {tau} s");
    }
    BatteryState {
        i_pol: current + (state.i_pol - current) * (-dt / tau).exp(),
        u_bulk: state.u_bulk + dt * current / params.c_bulk,
        ah_throughput: state.ah_throughput + current.abs() * dt / 3600.0,
        last_current: current,
        ..*state
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SocUpdate {
    pub soc: f64,
    /// The unclamped value left [0, 1].
    pub saturated: bool,
}

/// Coulomb counting. Charge current is scaled by `eta_coulomb`, discharge
/// current by `eta_discharge`.
pub fn soc_update(state: &BatteryState, params: &BatteryParams, current: f64, dt: f64) -> SocUpdate {
    let eta = if current > 0.0 { params.eta_discharge } else { params.eta_coulomb };
    let raw = state.soc - eta * current * dt / (3600.0 * params.q_rated);
    let soc = raw.clamp(0.0, 1.0);
    SocUpdate { soc, saturated: soc != raw }
}

/// Energy lost over `dt`, J: ohmic heat of the parallel strings plus the
/// coulombic loss on the terminal power.
pub fn loss_increment(params: &BatteryParams, current: f64, u_terminal: f64, dt: f64) -> f64 {
    let ohmic = current * current * params.r_ohm / params.n_parallel as f64;
    let coulombic = (u_terminal * current).abs() * (1.0 - params.eta_coulomb);
    dt * (ohmic + coulombic)
}

/// Lumped temperature after `dt` with ohmic heating and convective cooling.
pub fn thermal_step(state: &BatteryState, thermal: &ThermalParams, current: f64, params: &BatteryParams, dt: f64) -> f64 {
    let heat = current * current * params.r_ohm / params.n_parallel as f64;
    let cooling = thermal.h_conv * (state.temp - thermal.t_ambient);
    state.temp + dt * (heat - cooling) / thermal.heat_capacity
}

/// Result of one full battery update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryAdvance {
    pub state: BatteryState,
    pub u_terminal: f64,
    pub loss: f64,
    pub soc_saturated: bool,
}

/// Applies `current` for `dt`: terminal voltage and loss are evaluated on the
/// incoming state, then SOC, temperature and the circuit states advance.
pub fn advance(
    state: &BatteryState,
    params: &BatteryParams,
    thermal: &ThermalParams,
    current: f64,
    dt: f64,
) -> BatteryAdvance {
    let u_terminal = state.terminal_voltage(params, current);
    let loss = loss_increment(params, current, u_terminal, dt);
    let soc = soc_update(state, params, current, dt);
    let temp = thermal_step(state, thermal, current, params, dt);
    let mut next = battery_step(state, params, current, dt);
    next.soc = soc.soc;
    next.temp = temp;
    next.q_loss_acc += loss;
    BatteryAdvance { state: next, u_terminal, loss, soc_saturated: soc.saturated }
}
