//! PI expert, observation builder, reward functions and activation gate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radiation threshold of the activation gate, W/m2.
pub const GATE_IRRADIANCE: f64 = 100.0;
pub const OBSERVATION_DIM: usize = 10;
pub const DEFAULT_REWARD_EPS: f64 = 1e-6;
/// Channel names in observation order.
pub const OBSERVATION_CHANNELS: [&str; OBSERVATION_DIM] =
    ["temp", "irradiance", "do", "q_dil", "q_air", "co2_prev", "tod_sin", "tod_cos", "e", "int_e"];

/// Ideal-form PI controller without derivative action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PidConfig {
    /// L/min per pH unit. Negative: CO2 lowers pH.
    pub kp: f64,
    /// Integral time, s.
    pub ti: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Sampling time, s.
    pub ts: f64,
}

impl Default for PidConfig {
    fn default() -> Self {
        Self { kp: -32.0, ti: 1200.0, u_min: 0.0, u_max: 10.0, ts: 10.0 }
    }
}

impl PidConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ti > 0.0) || !(self.u_min < self.u_max) || !(self.ts > 0.0) || !self.kp.is_finite() {
            return Err(Error::InvalidParameter(format!("invalid PID config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PidState {
    /// Accumulated error, pH s. Kept within the integral clip.
    pub integral_e: f64,
    pub last_u: f64,
}

impl PidState {
    /// Integrate one sample of error with clipping anti-windup.
    pub fn accumulate(&mut self, e: f64, ts: f64, int_clip: f64) -> f64 {
        self.integral_e = (self.integral_e + e * ts).clamp(-int_clip, int_clip);
        self.integral_e
    }
}

pub fn pid_step(e: f64, state: &PidState, cfg: &PidConfig, int_clip: f64) -> (f64, PidState) {
    let mut next = *state;
    let integral = next.accumulate(e, cfg.ts, int_clip);
    let u_raw = cfg.kp * (e + integral / cfg.ti);
    let u = u_raw.clamp(cfg.u_min, cfg.u_max);
    next.last_u = u;
    (u, next)
}

/// Min/max envelope of one normalized observation channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    /// Map into [0, 1]; the flag reports clipping.
    pub fn normalize(&self, v: f64) -> (f64, bool) {
        let x = (v - self.min) / (self.max - self.min);
        let clipped = x.clamp(0.0, 1.0);
        (clipped, clipped != x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObservationConfig {
    pub temp: Range,
    pub irradiance: Range,
    pub do_conc: Range,
    pub q_dil: Range,
    pub q_air: Range,
    pub co2: Range,
    /// Bound on the error integral, pH s.
    pub int_clip: f64,
    pub setpoint: f64,
}

impl Default for ObservationConfig {
    fn default() -> Self {
        Self {
            temp: Range::new(0.0, 45.0),
            irradiance: Range::new(0.0, 1200.0),
            do_conc: Range::new(0.0, 30.0),
            q_dil: Range::new(0.0, 5.0),
            q_air: Range::new(0.0, 50.0),
            co2: Range::new(0.0, 10.0),
            int_clip: 240.0,
            setpoint: 8.0,
        }
    }
}

impl ObservationConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, r) in self.channels() {
            if !(r.min < r.max) {
                return Err(Error::InvalidParameter(format!("observation range {name}: min must be < max")));
            }
        }
        if !(self.int_clip > 0.0) {
            return Err(Error::InvalidParameter("observation.int_clip must be > 0".into()));
        }
        Ok(())
    }

    fn channels(&self) -> [(&'static str, Range); 6] {
        [
            ("temp", self.temp),
            ("irradiance", self.irradiance),
            ("do_conc", self.do_conc),
            ("q_dil", self.q_dil),
            ("q_air", self.q_air),
            ("co2", self.co2),
        ]
    }
}

/// Raw process measurements fed into an observation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurements {
    pub temp: f64,
    pub irradiance: f64,
    pub do_conc: f64,
    pub q_dil: f64,
    pub q_air: f64,
    /// CO2 flow applied over the previous interval, L/min.
    pub co2_prev: f64,
}

/// `[T, I, DO, Qd, Qair, CO2_prev, sin(tod), cos(tod), e, int_e / int_clip]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub values: [f64; OBSERVATION_DIM],
    /// Some measurement fell outside its normalization range.
    pub clipped: bool,
}

pub fn build_observation(
    meas: &Measurements,
    e: f64,
    integral_e: f64,
    t_of_day: f64,
    cfg: &ObservationConfig,
) -> Observation {
    let raw = [meas.temp, meas.irradiance, meas.do_conc, meas.q_dil, meas.q_air, meas.co2_prev];
    let mut values = [0.0; OBSERVATION_DIM];
    let mut clipped = false;
    for (i, ((_, range), v)) in cfg.channels().iter().zip(raw).enumerate() {
        let (x, c) = range.normalize(v);
        values[i] = x;
        clipped |= c;
    }
    let phase = 2.0 * std::f64::consts::PI * t_of_day / crate::plant::SECONDS_PER_DAY;
    values[6] = phase.sin();
    values[7] = phase.cos();
    values[8] = e;
    values[9] = (integral_e / cfg.int_clip).clamp(-1.0, 1.0);
    Observation { values, clipped }
}

pub fn reward_quadratic(e: f64) -> f64 {
    -(e * e)
}

/// Logarithmic reward; its maximum `-ln(eps)` is reached at zero error.
pub fn reward_log(e: f64, eps: f64) -> f64 {
    -(e * e + eps).ln()
}

/// Control is enabled when irradiance exceeds the threshold and pH is above
/// setpoint; once on it stays on until irradiance drops below the threshold.
pub fn activation_gate(irradiance: f64, ph: f64, setpoint: f64, currently_active: bool) -> bool {
    if currently_active {
        irradiance >= GATE_IRRADIANCE
    } else {
        irradiance > GATE_IRRADIANCE && ph > setpoint
    }
}
