//! Semi-empirical Arrhenius capacity-fade model and cycle-life estimate.
//!
//! `Q_loss = A · exp(−E/(R·T)) · Ah^τ` in percent, with the activation
//! energy `E = E_a + B·C` and `ln A = a·exp(−b·C) + c` both depending on
//! the C-rate. Loss is summed over C-rate buckets.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// C-rates above this are outside the calibrated range of the fits.
pub const CALIBRATED_MAX_C_RATE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FadeParams {
    /// J/mol
    pub e_a0: f64,
    /// J/mol per unit C-rate
    pub b_rate: f64,
    pub ln_a_amp: f64,
    pub ln_a_decay: f64,
    pub ln_a_offset: f64,
    /// Ah-throughput exponent.
    pub tau_exp: f64,
    /// J/(mol·K)
    pub r_gas: f64,
    /// Capacity loss that ends service life, percent.
    pub eol_loss_pct: f64,
    /// Width of the C-rate buckets.
    pub c_rate_bin: f64,
}

impl Default for FadeParams {
    fn default() -> Self {
        Self {
            e_a0: 31_500.0,
            b_rate: -370.3,
            ln_a_amp: 1.251,
            ln_a_decay: 0.2539,
            ln_a_offset: 9.21,
            tau_exp: 0.824,
            r_gas: 8.314,
            eol_loss_pct: 20.0,
            c_rate_bin: 0.25,
        }
    }
}

impl FadeParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.e_a0, self.b_rate, self.ln_a_amp, self.ln_a_decay, self.ln_a_offset, self.tau_exp, self.r_gas];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter { name: "life", reason: "all fade parameters must be finite".into() });
        }
        if !(self.eol_loss_pct > 0.0 && self.eol_loss_pct < 100.0) {
            return Err(Error::InvalidParameter {
                name: "life.eol_loss_pct",
                reason: format!("must be in (0, 100), got {}", self.eol_loss_pct),
            });
        }
        if !(self.c_rate_bin > 0.0) || !(self.r_gas > 0.0) {
            return Err(Error::InvalidParameter { name: "life.c_rate_bin", reason: "bin width and gas constant must be positive".into() });
        }
        Ok(())
    }

    /// `E = E_a + B·C`, J/mol.
    pub fn activation_energy(&self, c_rate: f64) -> f64 {
        if c_rate > CALIBRATED_MAX_C_RATE {
            log::warn!("C-rate {c_rate} is outside the calibrated range (<= {CALIBRATED_MAX_C_RATE})");
        }
        self.e_a0 + self.b_rate * c_rate
    }

    /// `ln A = a·exp(−b·C) + c`.
    pub fn ln_pre_exponential(&self, c_rate: f64) -> f64 {
        self.ln_a_amp * (-self.ln_a_decay * c_rate).exp() + self.ln_a_offset
    }

    /// `A·exp(−E/(R·T))`: loss per Ah^τ at a given rate and temperature.
    pub fn rate_factor(&self, c_rate: f64, t_bat: f64) -> f64 {
        (self.ln_pre_exponential(c_rate) - self.activation_energy(c_rate) / (self.r_gas * t_bat)).exp()
    }

    /// Capacity loss in percent for `ah` of throughput at one rate and temperature.
    pub fn capacity_loss_step(&self, c_rate: f64, t_bat: f64, ah: f64) -> f64 {
        if ah <= 0.0 {
            return 0.0;
        }
        self.rate_factor(c_rate, t_bat) * ah.powf(self.tau_exp)
    }

    /// Bucket index for a C-rate.
    pub fn bin_of(&self, c_rate: f64) -> i64 {
        (c_rate.abs() / self.c_rate_bin).round() as i64
    }

    pub fn bin_rate(&self, bin: i64) -> f64 {
        bin as f64 * self.c_rate_bin
    }
}

/// One usage bucket: throughput at a C-rate and its temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateBucket {
    pub c_rate: f64,
    /// K
    pub t_bat: f64,
    pub ah: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FadeState {
    pub q_loss_pct: f64,
    /// Cumulative Ah throughput per C-rate bucket.
    pub ah_by_rate: BTreeMap<i64, f64>,
}

/// Adds buckets to the running loss. Each addition contributes
/// `A·exp(−E/(R·T))·(Ah_new^τ − Ah_old^τ)` for its rate bucket, so splitting a
/// bucket into sequential parts at the same temperature gives the same total.
pub fn accumulate_loss(state: &FadeState, params: &FadeParams, buckets: &[RateBucket]) -> FadeState {
    let mut next = state.clone();
    for b in buckets {
        if b.ah <= 0.0 {
            continue;
        }
        let bin = params.bin_of(b.c_rate);
        let rate = params.bin_rate(bin);
        let old = next.ah_by_rate.get(&bin).copied().unwrap_or(0.0);
        let new = old + b.ah;
        next.q_loss_pct += params.rate_factor(rate, b.t_bat) * (new.powf(params.tau_exp) - old.powf(params.tau_exp));
        next.ah_by_rate.insert(bin, new);
    }
    next
}

/// Buckets a current/temperature trace by C-rate. Each bucket's temperature
/// is the throughput-weighted mean of the samples that fell into it.
pub fn bucket_trace(params: &FadeParams, q_rated: f64, currents: &[f64], temps: &[f64], dts: &[f64]) -> Vec<RateBucket> {
    let mut acc: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    for ((&i, &t), &dt) in currents.iter().zip(temps).zip(dts) {
        let ah = i.abs() * dt / 3600.0;
        if ah <= 0.0 {
            continue;
        }
        let entry = acc.entry(params.bin_of(i / q_rated)).or_default();
        entry.0 += ah;
        entry.1 += ah * t;
    }
    acc.into_iter()
        .map(|(bin, (ah, weighted))| RateBucket { c_rate: params.bin_rate(bin), t_bat: weighted / ah, ah })
        .collect()
}

/// Whole cycles until the end-of-life loss, assuming every cycle fades by
/// the same amount.
pub fn estimate_cycle_life(per_cycle_loss: f64, eol_loss_pct: f64) -> Result<u64> {
    if !(per_cycle_loss > 0.0) {
        return Err(Error::UndefinedLife(per_cycle_loss));
    }
    Ok((eol_loss_pct / per_cycle_loss).floor() as u64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeEstimate {
    pub buckets: Vec<RateBucket>,
    /// Percent capacity lost over one run of the cycle.
    pub per_cycle_loss_pct: f64,
    /// `None` when the run caused no fade.
    pub cycles: Option<u64>,
}

pub fn estimate_from_trace(params: &FadeParams, q_rated: f64, currents: &[f64], temps: &[f64], dts: &[f64]) -> LifeEstimate {
    let buckets = bucket_trace(params, q_rated, currents, temps, dts);
    let state = accumulate_loss(&FadeState::default(), params, &buckets);
    let cycles = estimate_cycle_life(state.q_loss_pct, params.eol_loss_pct).ok();
    LifeEstimate { buckets, per_cycle_loss_pct: state.q_loss_pct, cycles }
}
