//! Drive cycles and the longitudinal vehicle model that turns them into a
//! demand-power trace at the storage bus.

use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MPH_TO_MPS: f64 = 0.44704;
const KMH_TO_MPS: f64 = 1.0 / 3.6;

/// Unit of the `speed` column in a cycle file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedUnit {
    #[default]
    Mps,
    Mph,
    Kmh,
}

impl SpeedUnit {
    pub fn to_mps(self, speed: f64) -> f64 {
        match self {
            SpeedUnit::Mps => speed,
            SpeedUnit::Mph => speed * MPH_TO_MPS,
            SpeedUnit::Kmh => speed * KMH_TO_MPS,
        }
    }
}

impl FromStr for SpeedUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mps" | "m/s" => Ok(SpeedUnit::Mps),
            "mph" => Ok(SpeedUnit::Mph),
            "kmh" | "km/h" => Ok(SpeedUnit::Kmh),
            other => Err(format!("unknown speed unit `{other}` (expected mps, mph or kmh)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleSample {
    pub time: f64,
    /// m/s
    pub speed: f64,
}

/// A speed-versus-time schedule. Times strictly increase, speeds are
/// non-negative and there are at least two samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveCycle {
    pub name: String,
    samples: Vec<CycleSample>,
}

impl DriveCycle {
    pub fn new(name: impl Into<String>, samples: Vec<CycleSample>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::EmptyCycle(samples.len()));
        }
        for (idx, s) in samples.iter().enumerate() {
            // data rows start on line 2 of a file
            let line = idx + 2;
            if !s.time.is_finite() || !s.speed.is_finite() {
                return Err(Error::Parse { line, message: "non-finite value".into() });
            }
            if s.speed < 0.0 {
                return Err(Error::Parse { line, message: format!("negative speed {}", s.speed) });
            }
            if idx > 0 && s.time <= samples[idx - 1].time {
                return Err(Error::Ordering { line, time: s.time, previous: samples[idx - 1].time });
            }
        }
        Ok(Self { name: name.into(), samples })
    }

    /// Builds a cycle from uniformly spaced speeds (m/s) starting at t = 0.
    pub fn from_speeds(name: impl Into<String>, dt: f64, speeds: &[f64]) -> Result<Self> {
        let samples = speeds
            .iter()
            .enumerate()
            .map(|(i, &speed)| CycleSample { time: i as f64 * dt, speed })
            .collect();
        Self::new(name, samples)
    }

    pub fn samples(&self) -> &[CycleSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].time - self.samples[0].time
    }
}

/// Reads a `time,speed` CSV and converts speeds to m/s.
///
/// Rows are never re-sorted: a non-increasing time is reported with its line.
pub fn load_cycle<R: Read>(name: &str, source: R, unit: SpeedUnit) -> Result<DriveCycle> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);

    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "time" || &headers[1] != "speed" {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `time,speed`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::Parse { line, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(samples.len() + 2);
        if record.len() != 2 {
            return Err(Error::Parse { line, message: format!("expected 2 fields, found {}", record.len()) });
        }
        let parse = |field: &str, what: &str| -> Result<f64> {
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse { line, message: format!("invalid {what} `{field}`") })
        };
        let time = parse(&record[0], "time")?;
        let speed = unit.to_mps(parse(&record[1], "speed")?);
        samples.push(CycleSample { time, speed });
    }
    DriveCycle::new(name, samples)
}

/// Vehicle parameters for the longitudinal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// m²
    pub frontal_area: f64,
    /// m; carried for completeness, the wheel-level model does not need it
    pub tire_radius: f64,
    pub drag_coeff: f64,
    pub rolling_coeff: f64,
    pub drivetrain_eff: f64,
    /// kg/m³
    pub air_density: f64,
    /// m/s²
    pub gravity: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 1635.0,
            frontal_area: 2.04,
            tire_radius: 0.28,
            drag_coeff: 0.41,
            rolling_coeff: 0.03,
            drivetrain_eff: 0.9,
            air_density: 1.225,
            gravity: 9.81,
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vehicle.mass", self.mass),
            ("vehicle.frontal_area", self.frontal_area),
            ("vehicle.tire_radius", self.tire_radius),
            ("vehicle.drag_coeff", self.drag_coeff),
            ("vehicle.rolling_coeff", self.rolling_coeff),
            ("vehicle.drivetrain_eff", self.drivetrain_eff),
            ("vehicle.air_density", self.air_density),
            ("vehicle.gravity", self.gravity),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, reason: format!("must be positive, got {value}") });
            }
        }
        if self.drivetrain_eff > 1.0 {
            return Err(Error::InvalidParameter {
                name: "vehicle.drivetrain_eff",
                reason: format!("must be <= 1, got {}", self.drivetrain_eff),
            });
        }
        Ok(())
    }

    /// Tractive force at the wheel split into its three terms.
    pub fn wheel_force(&self, speed: f64, accel: f64) -> WheelForce {
        let inertial = self.mass * accel;
        let aero = 0.5 * self.air_density * self.drag_coeff * self.frontal_area * speed * speed;
        let rolling = if speed > 0.0 { self.mass * self.gravity * self.rolling_coeff } else { 0.0 };
        WheelForce { inertial, aero, rolling }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelForce {
    pub inertial: f64,
    pub aero: f64,
    pub rolling: f64,
}

impl WheelForce {
    pub fn total(&self) -> f64 {
        self.inertial + self.aero + self.rolling
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub time: f64,
    /// W at the storage bus; negative while regenerating
    pub power: f64,
    pub speed: f64,
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub samples: Vec<PowerSample>,
}

impl PowerTrace {
    pub fn powers(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.power).collect()
    }

    pub fn peak_power(&self) -> f64 {
        self.samples.iter().map(|s| s.power).fold(0.0, f64::max)
    }
}

/// Converts a cycle to bus demand power.
///
/// Acceleration is the backward difference of speed (zero at the first
/// sample). Traction power is divided by the drivetrain efficiency,
/// regenerated power is multiplied by it.
pub fn demand_power(cycle: &DriveCycle, params: &VehicleParams) -> PowerTrace {
    let samples = cycle.samples();
    let mut out = Vec::with_capacity(samples.len());
    for (idx, s) in samples.iter().enumerate() {
        let accel = if idx == 0 {
            0.0
        } else {
            let prev = samples[idx - 1];
            (s.speed - prev.speed) / (s.time - prev.time)
        };
        let wheel_power = params.wheel_force(s.speed, accel).total() * s.speed;
        let power = if wheel_power >= 0.0 {
            wheel_power / params.drivetrain_eff
        } else {
            wheel_power * params.drivetrain_eff
        };
        out.push(PowerSample { time: s.time, power, speed: s.speed, accel });
    }
    PowerTrace { samples: out }
}
