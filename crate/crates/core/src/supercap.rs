//! Two-branch RC supercapacitor bank behind a constant-efficiency DC/DC
//! converter.
//!
//! Circuit: a bulk capacitor `C_b` in series with `R_e` and a fast capacitor
//! `C_s` in series with `R_s` are joined at an internal node `N`, which
//! reaches the terminal through `R_t`. An optional leakage resistor sits from
//! `N` to ground (open by default). Discharge current `I` is positive.
//!
//! Kirchhoff at `N` with conductance `G = 1/R_e + 1/R_s + 1/R_leak`:
//!
//! ```text
//! V_N     = (U_b/R_e + U_s/R_s − I) / G
//! dU_b/dt = −(U_b − V_N) / (R_e·C_b)
//! dU_s/dt = −(U_s − V_N) / (R_s·C_s)
//! U_sc    = V_N − R_t·I
//! ```
//!
//! With the leak open this is
//!
//! ```text
//! d/dt [U_b]   1/(R_e+R_s) [−1/C_b   1/C_b] [U_b]   1/(R_e+R_s) [−R_s/C_b]
//!      [U_s] =             [ 1/C_s  −1/C_s] [U_s] +             [−R_e/C_s] I
//!
//! U_sc = (R_s·U_b + R_e·U_s)/(R_e+R_s) − (R_t + R_e·R_s/(R_e+R_s))·I
//! ```

use serde::{Deserialize, Serialize};

use crate::battery::solve_power_quadratic;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupercapParams {
    /// Bulk capacitance `C_b`, F.
    pub c_bulk: f64,
    /// Fast-branch capacitance `C_s`, F.
    pub c_fast: f64,
    /// Terminal resistance `R_t`, Ω.
    pub r_term: f64,
    /// Fast-branch series resistance `R_s`, Ω.
    pub r_fast: f64,
    /// Bulk-branch series resistance `R_e`, Ω.
    pub r_bulk: f64,
    /// Self-discharge resistance across the internal node, Ω. `None` is open.
    pub r_leak: Option<f64>,
    pub u_min: f64,
    pub u_max: f64,
    pub eta_coulomb: f64,
    pub dcdc_eff: f64,
    /// Converter power limit at the bus, W.
    pub p_max: f64,
}

impl Default for SupercapParams {
    fn default() -> Self {
        Self {
            c_bulk: 32.0,
            c_fast: 2.0,
            r_term: 0.05,
            r_fast: 0.5,
            r_bulk: 0.1,
            r_leak: None,
            u_min: 120.0,
            u_max: 240.0,
            eta_coulomb: 0.95,
            dcdc_eff: 0.95,
            p_max: 30_000.0,
        }
    }
}

impl SupercapParams {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("supercap.c_bulk", self.c_bulk),
            ("supercap.c_fast", self.c_fast),
            ("supercap.r_term", self.r_term),
            ("supercap.r_fast", self.r_fast),
            ("supercap.r_bulk", self.r_bulk),
            ("supercap.u_max", self.u_max),
            ("supercap.p_max", self.p_max),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be positive, got {value}") });
            }
        }
        if let Some(r) = self.r_leak {
            if !(r > 0.0) {
                return Err(Error::InvalidParameter { name: "supercap.r_leak", reason: format!("must be positive, got {r}") });
            }
        }
        if !(self.u_min >= 0.0 && self.u_min < self.u_max) {
            return Err(Error::InvalidParameter {
                name: "supercap.u_min",
                reason: format!("need 0 <= u_min < u_max, got {} / {}", self.u_min, self.u_max),
            });
        }
        for (name, eta) in [("supercap.eta_coulomb", self.eta_coulomb), ("supercap.dcdc_eff", self.dcdc_eff)] {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be in (0, 1], got {eta}") });
            }
        }
        Ok(())
    }

    pub fn capacitance(&self) -> f64 {
        self.c_bulk + self.c_fast
    }

    fn node_conductance(&self) -> f64 {
        1.0 / self.r_bulk + 1.0 / self.r_fast + self.r_leak.map_or(0.0, |r| 1.0 / r)
    }

    /// Resistance seen from the internal node into the two branches (and leak).
    pub fn branch_resistance(&self) -> f64 {
        1.0 / self.node_conductance()
    }

    /// Total resistance between the zero-current voltage and the terminal.
    pub fn internal_resistance(&self) -> f64 {
        self.r_term + self.branch_resistance()
    }

    /// State matrix `A` and input vector `b` of `dx/dt = A·x + b·I` for
    /// `x = (U_b, U_s)`.
    pub fn state_matrix(&self) -> ([[f64; 2]; 2], [f64; 2]) {
        let g = self.node_conductance();
        let (re, rs) = (self.r_bulk, self.r_fast);
        let kb = 1.0 / (re * self.c_bulk);
        let ks = 1.0 / (rs * self.c_fast);
        let a = [
            [-kb * (1.0 - 1.0 / (re * g)), kb / (rs * g)],
            [ks / (re * g), -ks * (1.0 - 1.0 / (rs * g))],
        ];
        let b = [-kb / g, -ks / g];
        (a, b)
    }

    /// Shortest time constant of the branch dynamics, s.
    pub fn fastest_time_constant(&self) -> f64 {
        let (a, _) = self.state_matrix();
        let trace = a[0][0] + a[1][1];
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        let disc = (trace * trace - 4.0 * det).max(0.0);
        let fastest = ((trace - disc.sqrt()) / 2.0).abs();
        1.0 / fastest
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupercapState {
    /// Bulk-branch capacitor voltage, V.
    pub u_b: f64,
    /// Fast-branch capacitor voltage, V.
    pub u_s: f64,
    /// Accumulated loss, J.
    pub q_loss_acc: f64,
}

impl SupercapState {
    /// Bank at rest with both branches at the voltage that gives `soc`.
    pub fn at_soc(params: &SupercapParams, soc: f64) -> Self {
        let v = params.u_min + soc.clamp(0.0, 1.0) * (params.u_max - params.u_min);
        Self { u_b: v, u_s: v, q_loss_acc: 0.0 }
    }

    fn node_voltage(&self, params: &SupercapParams, current: f64) -> f64 {
        (self.u_b / params.r_bulk + self.u_s / params.r_fast - current) / params.node_conductance()
    }

    /// Terminal voltage at zero current, V.
    pub fn open_voltage(&self, params: &SupercapParams) -> f64 {
        self.node_voltage(params, 0.0)
    }

    /// Stored charge `C_b·U_b + C_s·U_s`, C.
    pub fn charge(&self, params: &SupercapParams) -> f64 {
        params.c_bulk * self.u_b + params.c_fast * self.u_s
    }

    /// Stored energy, J.
    pub fn energy(&self, params: &SupercapParams) -> f64 {
        0.5 * (params.c_bulk * self.u_b * self.u_b + params.c_fast * self.u_s * self.u_s)
    }
}

pub fn sc_terminal_voltage(state: &SupercapState, params: &SupercapParams, current: f64) -> f64 {
    state.node_voltage(params, current) - params.r_term * current
}

/// Voltage-linear state of charge at the zero-current terminal voltage.
pub fn sc_soc(state: &SupercapState, params: &SupercapParams) -> f64 {
    ((state.open_voltage(params) - params.u_min) / (params.u_max - params.u_min)).clamp(0.0, 1.0)
}

/// Euler step of the branch voltages; the loss is booked on the returned state.
pub fn sc_step(state: &SupercapState, params: &SupercapParams, current: f64, dt: f64) -> SupercapState {
    let tau = params.fastest_time_constant();
    if dt > tau {
        log::warn!("supercap step dt={dt} s exceeds the fastest branch time constant {tau} s");
    }
    let (a, b) = params.state_matrix();
    let du_b = a[0][0] * state.u_b + a[0][1] * state.u_s + b[0] * current;
    let du_s = a[1][0] * state.u_b + a[1][1] * state.u_s + b[1] * current;
    let u_terminal = sc_terminal_voltage(state, params, current);
    SupercapState {
        u_b: state.u_b + dt * du_b,
        u_s: state.u_s + dt * du_s,
        q_loss_acc: state.q_loss_acc + sc_loss_increment(params, current, u_terminal, dt),
    }
}

/// Energy lost over `dt`, J.
pub fn sc_loss_increment(params: &SupercapParams, current: f64, u_terminal: f64, dt: f64) -> f64 {
    let resistive = current * current * (params.r_term + params.branch_resistance());
    let coulombic = (u_terminal * current).abs() * (1.0 - params.eta_coulomb);
    dt * (resistive + coulombic)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScCurrent {
    pub amps: f64,
    /// Power was clipped to the converter limit or the bank's power ceiling.
    pub saturated: bool,
}

/// Bank current that delivers `p_sc` (W, bus side, discharge positive)
/// through the converter.
pub fn sc_current_from_power(state: &SupercapState, params: &SupercapParams, p_sc: f64) -> Result<ScCurrent> {
    if p_sc == 0.0 {
        return Ok(ScCurrent { amps: 0.0, saturated: false });
    }
    let v_open = state.open_voltage(params);
    if p_sc > 0.0 && v_open <= params.u_min {
        return Err(Error::SupercapUnavailable(format!("bank at {v_open:.2} V is at or below u_min")));
    }
    if p_sc < 0.0 && v_open >= params.u_max {
        return Err(Error::SupercapUnavailable(format!("bank at {v_open:.2} V is at or above u_max")));
    }
    let clipped = p_sc.clamp(-params.p_max, params.p_max);
    let bank_power = if clipped > 0.0 { clipped / params.dcdc_eff } else { clipped * params.dcdc_eff };
    let solved = solve_power_quadratic(v_open, params.internal_resistance(), bank_power);
    Ok(ScCurrent { amps: solved.amps, saturated: solved.saturated || clipped != p_sc })
}

/// Bus-side power the bank can give (`discharge`) or take (`charge`) over
/// the next `dt` without leaving its voltage window, both as magnitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScLimits {
    pub discharge: f64,
    pub charge: f64,
}

pub fn sc_power_limits(state: &SupercapState, params: &SupercapParams, dt: f64) -> ScLimits {
    let v_open = state.open_voltage(params);
    let stored = state.energy(params);
    let c = params.capacitance();
    let floor = 0.5 * c * params.u_min * params.u_min;
    let ceiling = 0.5 * c * params.u_max * params.u_max;

    let discharge = if v_open <= params.u_min {
        0.0
    } else {
        let by_energy = (stored - floor).max(0.0) / dt * params.dcdc_eff;
        let by_transfer = v_open * v_open / (4.0 * params.internal_resistance()) * params.dcdc_eff;
        by_energy.min(by_transfer).min(params.p_max)
    };
    let charge = if v_open >= params.u_max {
        0.0
    } else {
        ((ceiling - stored).max(0.0) / dt / params.dcdc_eff).min(params.p_max)
    };
    ScLimits { discharge, charge }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> SupercapParams {
        SupercapParams::default()
    }

    #[test]
    fn equal_branches_stay_put_at_zero_current() {
        let p = params();
        let s = SupercapState::at_soc(&p, 0.6);
        let next = sc_step(&s, &p, 0.0, 1.0);
        assert_relative_eq!(next.u_b, s.u_b, epsilon = 1e-12);
        assert_relative_eq!(next.u_s, s.u_s, epsilon = 1e-12);
        assert_eq!(next.q_loss_acc, 0.0);
    }

    #[test]
    fn unequal_branches_converge_monotonically() {
        let p = params();
        let mut s = SupercapState { u_b: 200.0, u_s: 150.0, q_loss_acc: 0.0 };
        let q0 = s.charge(&p);
        // analytic: the gap decays as exp(-t/τ) with τ = (R_e+R_s)·C_b·C_s/(C_b+C_s)
        let tau = (p.r_bulk + p.r_fast) * p.c_bulk * p.c_fast / (p.c_bulk + p.c_fast);
        assert_relative_eq!(p.fastest_time_constant(), tau, epsilon = 1e-12);
        let mut gap = s.u_b - s.u_s;
        let dt = tau / 50.0;
        for k in 1..=250 {
            s = sc_step(&s, &p, 0.0, dt);
            let next_gap = s.u_b - s.u_s;
            assert!(next_gap > 0.0 && next_gap < gap);
            gap = next_gap;
            if k == 250 {
                let exact = 50.0 * (-(k as f64) * dt / tau).exp();
                // explicit Euler at dt = τ/50 lags the exponential by ~5 % after 5τ
                assert!((gap / exact - 1.0).abs() < 0.06);
            }
        }
        assert_relative_eq!(s.charge(&p), q0, max_relative = 1e-12);
        // converges to the charge-weighted mean
        let mean = q0 / p.capacitance();
        assert!((s.u_b - mean).abs() < 0.5 && (s.u_s - mean).abs() < 0.5);
    }

    #[test]
    fn discharge_removes_exact_charge() {
        let p = params();
        let mut s = SupercapState { u_b: 230.0, u_s: 225.0, q_loss_acc: 0.0 };
        for _ in 0..20 {
            let before = s.charge(&p);
            s = sc_step(&s, &p, 40.0, 1.0);
            assert_relative_eq!(before - s.charge(&p), 40.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn terminal_voltage_cases() {
        let p = params();
        let s = SupercapState { u_b: 240.0, u_s: 240.0, q_loss_acc: 0.0 };
        assert_relative_eq!(sc_terminal_voltage(&s, &p, 0.0), 240.0, epsilon = 1e-12);
        assert!(sc_terminal_voltage(&s, &p, 10.0) < 240.0);

        // independent KCL solve at the node: (U_b−V)/R_e + (U_s−V)/R_s = I
        let i = 50.0;
        let v_node = (240.0 / p.r_bulk + 240.0 / p.r_fast - i) / (1.0 / p.r_bulk + 1.0 / p.r_fast);
        let expected = v_node - p.r_term * i;
        assert_relative_eq!(sc_terminal_voltage(&s, &p, i), expected, epsilon = 1e-12);
        // 240 − 50·(0.05 + 0.1·0.5/0.6)
        assert_relative_eq!(expected, 240.0 - 50.0 * (0.05 + 0.05 / 0.6), epsilon = 1e-12);
    }

    #[test]
    fn soc_at_rails_and_midpoint() {
        let p = params();
        assert_eq!(sc_soc(&SupercapState { u_b: p.u_min, u_s: p.u_min, q_loss_acc: 0.0 }, &p), 0.0);
        assert_eq!(sc_soc(&SupercapState { u_b: p.u_max, u_s: p.u_max, q_loss_acc: 0.0 }, &p), 1.0);
        let mid = 0.5 * (p.u_min + p.u_max);
        assert_relative_eq!(sc_soc(&SupercapState { u_b: mid, u_s: mid, q_loss_acc: 0.0 }, &p), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn soc_monotone_in_charge() {
        let p = params();
        let mut last = -1.0;
        for k in 0..=100 {
            let v = 100.0 + 1.5 * k as f64;
            let soc = sc_soc(&SupercapState { u_b: v, u_s: v, q_loss_acc: 0.0 }, &p);
            assert!(soc >= last);
            last = soc;
        }
    }

    #[test]
    fn current_from_power_limits() {
        let ideal = SupercapParams {
            dcdc_eff: 1.0,
            r_term: 0.0,
            r_fast: 1e-12,
            r_bulk: 1e-12,
            ..params()
        };
        let s = SupercapState { u_b: 240.0, u_s: 240.0, q_loss_acc: 0.0 };
        assert_eq!(sc_current_from_power(&s, &ideal, 0.0).unwrap().amps, 0.0);
        assert_relative_eq!(sc_current_from_power(&s, &ideal, 24_000.0).unwrap().amps, 100.0, max_relative = 1e-9);
        let lossy = SupercapParams { dcdc_eff: 0.95, ..ideal };
        assert_relative_eq!(sc_current_from_power(&s, &lossy, 24_000.0).unwrap().amps, 100.0 / 0.95, max_relative = 1e-9);
    }

    #[test]
    fn depleted_bank_refuses_discharge() {
        let p = params();
        let empty = SupercapState::at_soc(&p, 0.0);
        assert!(matches!(sc_current_from_power(&empty, &p, 1000.0), Err(Error::SupercapUnavailable(_))));
        assert!(sc_current_from_power(&empty, &p, -1000.0).is_ok());
        assert_eq!(sc_power_limits(&empty, &p, 1.0).discharge, 0.0);
        let full = SupercapState::at_soc(&p, 1.0);
        assert_eq!(sc_power_limits(&full, &p, 1.0).charge, 0.0);
    }

    #[test]
    fn converter_limit_flags_saturation() {
        let p = params();
        let s = SupercapState::at_soc(&p, 0.8);
        let c = sc_current_from_power(&s, &p, 2.0 * p.p_max).unwrap();
        assert!(c.saturated);
        let at_limit = sc_current_from_power(&s, &p, p.p_max).unwrap();
        assert_relative_eq!(c.amps, at_limit.amps, epsilon = 1e-12);
    }

    #[test]
    fn leak_drains_charge_at_rest() {
        let p = SupercapParams { r_leak: Some(1000.0), ..params() };
        let s = SupercapState::at_soc(&p, 0.8);
        let next = sc_step(&s, &p, 0.0, 1.0);
        assert!(next.charge(&p) < s.charge(&p));
        let v = s.open_voltage(&p);
        assert_relative_eq!(s.charge(&p) - next.charge(&p), v / 1000.0, max_relative = 1e-9);
    }

    fn bus_energy_run(p: &SupercapParams, s: SupercapState, power: f64, dt: f64, steps: usize) -> SupercapState {
        let mut s = s;
        for _ in 0..steps {
            let i = sc_current_from_power(&s, p, power).unwrap().amps;
            s = sc_step(&s, p, i, dt);
        }
        s
    }

    #[test]
    fn round_trip_returns_no_more_than_stored() {
        let p = params();
        let start = SupercapState::at_soc(&p, 0.5);
        let charge_in = 10_000.0 * 5.0;
        let charged = bus_energy_run(&p, start, -10_000.0, 0.1, 50);
        let target = sc_soc(&start, &p);
        let mut s = charged;
        let mut out = 0.0;
        while sc_soc(&s, &p) > target {
            let i = sc_current_from_power(&s, &p, 10_000.0).unwrap().amps;
            s = sc_step(&s, &p, i, 0.1);
            out += 10_000.0 * 0.1;
        }
        assert!(out <= charge_in);

        let ideal = SupercapParams { r_term: 1e-4, r_fast: 1e-3, r_bulk: 1e-3, eta_coulomb: 1.0, dcdc_eff: 1.0, ..p };
        let start = SupercapState::at_soc(&ideal, 0.5);
        let charged = bus_energy_run(&ideal, start, -10_000.0, 1e-3, 5000);
        let stored = charged.energy(&ideal) - start.energy(&ideal);
        assert!(stored <= 50_000.0);
        assert_relative_eq!(stored, 50_000.0, max_relative = 1e-3);
    }
}
