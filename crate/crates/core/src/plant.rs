//! Surrogate open-raceway photobioreactor.
//!
//! First-order nonlinear model of culture pH, dissolved oxygen and
//! temperature driven by solar irradiance, CO2 injection, on/off aeration
//! and dilution pulses. Integrated with explicit Euler at the controller
//! sampling time.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::seeds::{rng_from, splitmix64, Rng};

pub const SECONDS_PER_DAY: f64 = 86_400.0;
pub const PH_MIN: f64 = 5.0;
pub const PH_MAX: f64 = 11.0;
pub const TEMP_MIN: f64 = 0.0;
pub const TEMP_MAX: f64 = 45.0;
/// Physical limit of the CO2 injection valve, L/min.
pub const CO2_FLOW_MAX: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub ph: f64,
    /// Dissolved oxygen, mg/L.
    pub do_conc: f64,
    /// Culture temperature, degC.
    pub temp: f64,
    /// Simulation time, s.
    pub t: f64,
}

impl PlantState {
    pub fn time_of_day(&self) -> f64 {
        self.t.rem_euclid(SECONDS_PER_DAY)
    }
}

/// Exogenous drivers for one sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ExogenousInputs {
    /// Global irradiance, W/m2.
    pub irradiance: f64,
    /// Aeration flow, L/min.
    pub q_air: f64,
    /// Dilution flow, L/min.
    pub q_dil: f64,
    /// Ambient temperature, degC.
    pub t_amb: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantParams {
    /// pH rise per unit of photosynthetic drive, pH m2/(W s).
    pub k_p: f64,
    /// pH drop per unit CO2 flow, pH/(L/min s).
    pub k_c: f64,
    /// pH rise per unit air flow (CO2 stripping), pH/(L/min s).
    pub k_a: f64,
    /// Dilution pull-rate towards the medium pH, 1/(L/min s).
    pub k_d: f64,
    pub ph_in: f64,
    /// Half-saturation irradiance, W/m2.
    pub k_i: f64,
    pub q10: f64,
    pub k_o: f64,
    pub k_la: f64,
    pub do_sat: f64,
    pub r_resp: f64,
    pub tau_t: f64,
    pub k_heat: f64,
    /// Per-step additive pH noise std.
    pub noise_std: f64,
    /// Std of the delivered-vs-commanded CO2 flow of an open valve, L/min.
    pub valve_noise_std: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            k_p: 1.4e-6,
            k_c: 2.5e-4,
            k_a: 1.25e-5,
            k_d: 3.0e-4,
            ph_in: 7.6,
            k_i: 300.0,
            q10: 2.0,
            k_o: 2.6e-6,
            k_la: 2.1e-5,
            do_sat: 7.5,
            r_resp: 2.8e-4,
            tau_t: 10_800.0,
            k_heat: 0.005,
            noise_std: 0.002,
            valve_noise_std: 0.3,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let gains = [
            ("k_p", self.k_p),
            ("k_c", self.k_c),
            ("k_a", self.k_a),
            ("k_d", self.k_d),
            ("k_o", self.k_o),
            ("k_la", self.k_la),
            ("r_resp", self.r_resp),
            ("k_heat", self.k_heat),
            ("noise_std", self.noise_std),
            ("valve_noise_std", self.valve_noise_std),
            ("q10", self.q10),
            ("do_sat", self.do_sat),
        ];
        for (name, v) in gains {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("plant.{name} must be >= 0, got {v}")));
            }
        }
        if !(self.k_i > 0.0) {
            return Err(Error::InvalidParameter("plant.k_i must be > 0".into()));
        }
        if !(self.tau_t > 0.0) {
            return Err(Error::InvalidParameter("plant.tau_t must be > 0".into()));
        }
        if !self.ph_in.is_finite() {
            return Err(Error::NonFinite("plant.ph_in"));
        }
        Ok(())
    }

    /// Temperature-corrected light-limitation factor.
    pub fn photosynthesis_factor(&self, irradiance: f64, temp: f64) -> f64 {
        if irradiance <= 0.0 {
            return 0.0;
        }
        self.q10.powf((temp - 20.0) / 10.0) * irradiance / (irradiance + self.k_i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudEvent {
    pub start: f64,
    pub duration: f64,
    /// Fraction of irradiance removed, in [0, 1].
    pub attenuation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DilutionPulse {
    pub start: f64,
    pub duration: f64,
    /// L/min.
    pub flow: f64,
}

impl DilutionPulse {
    fn covers(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

/// Disturbances of a single day. Times are seconds of day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSchedule {
    pub i_max: f64,
    pub sunrise: f64,
    pub sunset: f64,
    pub cloud_events: Vec<CloudEvent>,
    pub dilution_pulses: Vec<DilutionPulse>,
    pub do_hi: f64,
    pub do_lo: f64,
    pub q_air_on: f64,
    pub t_amb_mean: f64,
    pub t_amb_amp: f64,
}

impl DisturbanceSchedule {
    pub fn clear_sky(i_max: f64, sunrise: f64, sunset: f64) -> Self {
        Self {
            i_max,
            sunrise,
            sunset,
            cloud_events: Vec::new(),
            dilution_pulses: Vec::new(),
            do_hi: 20.0,
            do_lo: 14.0,
            q_air_on: 30.0,
            t_amb_mean: 20.0,
            t_amb_amp: 6.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sunrise < self.sunset) {
            return Err(Error::InvalidParameter("sunrise must precede sunset".into()));
        }
        if !(self.do_lo < self.do_hi) {
            return Err(Error::InvalidParameter("do_lo must be below do_hi".into()));
        }
        if self.i_max < 0.0 || self.q_air_on < 0.0 {
            return Err(Error::InvalidParameter("i_max and q_air_on must be >= 0".into()));
        }
        for c in &self.cloud_events {
            if !(0.0..=1.0).contains(&c.attenuation) || c.duration < 0.0 {
                return Err(Error::InvalidParameter(format!("bad cloud event {c:?}")));
            }
        }
        let mut pulses = self.dilution_pulses.clone();
        pulses.sort_by(|a, b| a.start.total_cmp(&b.start));
        for w in pulses.windows(2) {
            if w[0].start + w[0].duration > w[1].start {
                return Err(Error::InvalidParameter("dilution pulses overlap".into()));
            }
        }
        if pulses.iter().any(|p| p.flow < 0.0 || p.duration < 0.0) {
            return Err(Error::InvalidParameter("dilution pulse flow/duration must be >= 0".into()));
        }
        Ok(())
    }

    /// Ambient temperature, peaking at 15:00.
    pub fn ambient_temperature(&self, tod: f64) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * (tod - 9.0 * 3600.0) / SECONDS_PER_DAY;
        self.t_amb_mean + self.t_amb_amp * phase.sin()
    }

    pub fn dilution_flow(&self, tod: f64) -> f64 {
        self.dilution_pulses.iter().filter(|p| p.covers(tod)).map(|p| p.flow).sum()
    }
}

/// Clear-sky half-sine irradiance with multiplicative cloud attenuation.
pub fn diurnal_irradiance(tod: f64, sched: &DisturbanceSchedule) -> f64 {
    if tod <= sched.sunrise || tod >= sched.sunset {
        return 0.0;
    }
    let x = (tod - sched.sunrise) / (sched.sunset - sched.sunrise);
    let mut irradiance = sched.i_max * (std::f64::consts::PI * x).sin();
    for c in &sched.cloud_events {
        if tod >= c.start && tod < c.start + c.duration {
            irradiance *= 1.0 - c.attenuation;
        }
    }
    irradiance.max(0.0)
}

/// On/off aeration with hysteresis on dissolved oxygen.
pub fn air_controller(do_conc: f64, currently_on: bool, sched: &DisturbanceSchedule) -> f64 {
    let on = if do_conc >= sched.do_hi {
        true
    } else if do_conc <= sched.do_lo {
        false
    } else {
        currently_on
    };
    if on {
        sched.q_air_on
    } else {
        0.0
    }
}

/// Flow actually delivered by the CO2 valve for a commanded flow.
///
/// A shut valve (`u_cmd <= 0`) delivers exactly zero. One normal draw is
/// consumed per call whatever the command, so controllers sharing a seed see
/// the same noise sequence.
pub fn deliver_co2(u_cmd: f64, p: &PlantParams, rng: &mut Rng) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    if u_cmd <= 0.0 {
        0.0
    } else {
        (u_cmd + p.valve_noise_std * z).clamp(0.0, CO2_FLOW_MAX)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub state: PlantState,
    /// The pH clamp was active on this step.
    pub ph_clamped: bool,
    /// A DO or temperature clamp was active on this step.
    pub other_clamped: bool,
}

pub fn plant_step(
    state: &PlantState,
    u_co2: f64,
    x: &ExogenousInputs,
    p: &PlantParams,
    ts: f64,
    rng: &mut Rng,
) -> Result<StepOutcome> {
    ensure_finite(state.ph, "plant state ph")?;
    ensure_finite(state.do_conc, "plant state do")?;
    ensure_finite(state.temp, "plant state temp")?;
    ensure_finite(u_co2, "co2 flow")?;
    ensure_finite(x.irradiance, "irradiance")?;
    ensure_finite(x.q_air, "air flow")?;
    ensure_finite(x.q_dil, "dilution flow")?;
    ensure_finite(x.t_amb, "ambient temperature")?;
    if !(ts > 0.0 && ts.is_finite()) {
        return Err(Error::InvalidParameter(format!("sampling time must be > 0, got {ts}")));
    }
    if !(0.0..=CO2_FLOW_MAX).contains(&u_co2) {
        return Err(Error::InvalidParameter(format!("co2 flow {u_co2} outside [0, {CO2_FLOW_MAX}]")));
    }

    let z: f64 = rng.sample(StandardNormal);
    let light = x.irradiance * p.photosynthesis_factor(x.irradiance, state.temp);

    let dph = p.k_p * light - p.k_c * u_co2 + p.k_a * x.q_air - p.k_d * x.q_dil * (state.ph - p.ph_in);
    let ph_raw = state.ph + ts * dph + p.noise_std * z;
    let ph = ph_raw.clamp(PH_MIN, PH_MAX);

    let ddo = p.k_o * light - p.k_la * x.q_air * (state.do_conc - p.do_sat) - p.r_resp;
    let do_raw = state.do_conc + ts * ddo;
    let do_conc = do_raw.max(0.0);

    let dtemp = (x.t_amb + p.k_heat * x.irradiance - state.temp) / p.tau_t;
    let temp_raw = state.temp + ts * dtemp;
    let temp = temp_raw.clamp(TEMP_MIN, TEMP_MAX);

    Ok(StepOutcome {
        state: PlantState { ph, do_conc, temp, t: state.t + ts },
        ph_clamped: ph != ph_raw,
        other_clamped: do_conc != do_raw || temp != temp_raw,
    })
}

/// Ranges a day generator draws from. Times in hours of day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SeasonProfile {
    pub i_max: f64,
    /// Relative day-to-day spread of the peak irradiance.
    pub i_max_jitter: f64,
    pub sunrise_h: f64,
    pub sunset_h: f64,
    pub t_amb_mean: f64,
    pub t_amb_amp: f64,
    pub do_hi: f64,
    pub do_lo: f64,
    pub q_air_on: f64,
    /// Day of week of day 0, 0 = Monday.
    pub first_weekday: u32,
    pub max_clouds: u32,
    pub cloud_minutes: [f64; 2],
    pub cloud_attenuation: [f64; 2],
    /// Harvest dilution pulses per weekday, inclusive range.
    pub harvest_pulses: [u32; 2],
    /// Window in which harvest pulses start, hours.
    pub harvest_window_h: [f64; 2],
    pub harvest_minutes: [f64; 2],
    pub harvest_flow: [f64; 2],
    /// Evaporation top-ups per day (weekends included).
    pub topups: u32,
    pub topup_minutes: f64,
    pub topup_flow: f64,
}

impl Default for SeasonProfile {
    fn default() -> Self {
        Self::spring()
    }
}

impl SeasonProfile {
    /// Long, bright days; used for collecting the expert dataset.
    pub fn spring() -> Self {
        Self {
            i_max: 1000.0,
            i_max_jitter: 0.05,
            sunrise_h: 6.5,
            sunset_h: 20.0,
            t_amb_mean: 20.0,
            t_amb_amp: 6.0,
            do_hi: 20.0,
            do_lo: 14.0,
            q_air_on: 30.0,
            first_weekday: 0,
            max_clouds: 2,
            cloud_minutes: [10.0, 40.0],
            cloud_attenuation: [0.3, 0.7],
            harvest_pulses: [1, 1],
            harvest_window_h: [10.0, 15.0],
            harvest_minutes: [20.0, 30.0],
            harvest_flow: [2.0, 3.0],
            topups: 2,
            topup_minutes: 10.0,
            topup_flow: 0.5,
        }
    }

    /// Short, cooler days with a different dilution routine; the test season.
    pub fn autumn() -> Self {
        Self {
            i_max: 800.0,
            i_max_jitter: 0.05,
            sunrise_h: 7.75,
            sunset_h: 18.0,
            t_amb_mean: 15.0,
            t_amb_amp: 5.0,
            do_hi: 20.0,
            do_lo: 14.0,
            q_air_on: 30.0,
            first_weekday: 2,
            max_clouds: 3,
            cloud_minutes: [10.0, 40.0],
            cloud_attenuation: [0.3, 0.7],
            harvest_pulses: [1, 2],
            harvest_window_h: [9.5, 14.5],
            harvest_minutes: [20.0, 40.0],
            harvest_flow: [1.5, 3.0],
            topups: 2,
            topup_minutes: 10.0,
            topup_flow: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("season: {m}")));
        if !(0.0 <= self.sunrise_h && self.sunrise_h < self.sunset_h && self.sunset_h <= 24.0) {
            return bad("need 0 <= sunrise_h < sunset_h <= 24");
        }
        if !(self.do_lo < self.do_hi) {
            return bad("do_lo must be below do_hi");
        }
        if self.harvest_pulses[0] > self.harvest_pulses[1] {
            return bad("harvest_pulses range reversed");
        }
        for (name, r) in [
            ("cloud_minutes", self.cloud_minutes),
            ("cloud_attenuation", self.cloud_attenuation),
            ("harvest_window_h", self.harvest_window_h),
            ("harvest_minutes", self.harvest_minutes),
            ("harvest_flow", self.harvest_flow),
        ] {
            if !(r[0] <= r[1] && r[0] >= 0.0) {
                return bad(&format!("{name} must be a nonnegative [lo, hi] range"));
            }
        }
        if self.cloud_attenuation[1] > 1.0 {
            return bad("cloud attenuation must be <= 1");
        }
        if self.i_max < 0.0 || !(0.0..1.0).contains(&self.i_max_jitter) {
            return bad("i_max must be >= 0 and i_max_jitter in [0, 1)");
        }
        Ok(())
    }

    pub fn is_weekend(&self, day_index: u32) -> bool {
        (self.first_weekday + day_index) % 7 >= 5
    }
}

/// One day of exogenous inputs sampled at `ts`. Aeration is state-driven and
/// is resolved during simulation by [`air_controller`].
#[derive(Debug, Clone, PartialEq)]
pub struct DayInputs {
    pub day_index: u32,
    pub weekend: bool,
    pub schedule: DisturbanceSchedule,
    pub ts: f64,
    pub irradiance: Vec<f64>,
    pub q_dil: Vec<f64>,
    pub t_amb: Vec<f64>,
}

impl DayInputs {
    pub fn steps(&self) -> usize {
        self.irradiance.len()
    }

    pub fn exogenous(&self, k: usize, q_air: f64) -> ExogenousInputs {
        ExogenousInputs { irradiance: self.irradiance[k], q_air, q_dil: self.q_dil[k], t_amb: self.t_amb[k] }
    }
}

fn uniform(rng: &mut Rng, range: [f64; 2]) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// Place `count` non-overlapping pulses with starts in `window` (seconds).
fn place_pulses(
    rng: &mut Rng,
    existing: &mut Vec<DilutionPulse>,
    count: u32,
    window: [f64; 2],
    minutes: [f64; 2],
    flow: [f64; 2],
) {
    let mut placed = 0;
    let mut attempts = 0;
    while placed < count && attempts < 200 {
        attempts += 1;
        let candidate = DilutionPulse {
            start: uniform(rng, window).round(),
            duration: (uniform(rng, minutes) * 60.0).round(),
            flow: uniform(rng, flow),
        };
        let gap = 1800.0;
        let clash = existing.iter().any(|p| {
            candidate.start < p.start + p.duration + gap && p.start < candidate.start + candidate.duration + gap
        });
        if !clash {
            existing.push(candidate);
            placed += 1;
        }
    }
    existing.sort_by(|a, b| a.start.total_cmp(&b.start));
}

/// Deterministic day generator: the same `(seed, day_index)` always yields
/// the same series, independent of which other days were generated.
pub fn build_day_inputs(day_index: u32, profile: &SeasonProfile, seed: u64, ts: f64) -> DayInputs {
    let mut rng = rng_from(splitmix64(seed ^ splitmix64(u64::from(day_index) + 1)));
    let weekend = profile.is_weekend(day_index);
    let sunrise = profile.sunrise_h * 3600.0;
    let sunset = profile.sunset_h * 3600.0;
    let i_max = profile.i_max * (1.0 + profile.i_max_jitter * rng.random_range(-1.0..=1.0));

    let n_clouds = rng.random_range(0..=profile.max_clouds);
    let mut cloud_events = Vec::with_capacity(n_clouds as usize);
    for _ in 0..n_clouds {
        let duration = (uniform(&mut rng, profile.cloud_minutes) * 60.0).round();
        let start = uniform(&mut rng, [sunrise + 3600.0, (sunset - 3600.0 - duration).max(sunrise + 3600.0)]).round();
        cloud_events.push(CloudEvent { start, duration, attenuation: uniform(&mut rng, profile.cloud_attenuation) });
    }

    let mut dilution_pulses = Vec::new();
    if !weekend {
        let n = rng.random_range(profile.harvest_pulses[0]..=profile.harvest_pulses[1]);
        place_pulses(
            &mut rng,
            &mut dilution_pulses,
            n,
            [profile.harvest_window_h[0] * 3600.0, profile.harvest_window_h[1] * 3600.0],
            profile.harvest_minutes,
            profile.harvest_flow,
        );
    }
    place_pulses(
        &mut rng,
        &mut dilution_pulses,
        profile.topups,
        [sunrise, sunset],
        [profile.topup_minutes, profile.topup_minutes],
        [profile.topup_flow, profile.topup_flow],
    );

    let schedule = DisturbanceSchedule {
        i_max,
        sunrise,
        sunset,
        cloud_events,
        dilution_pulses,
        do_hi: profile.do_hi,
        do_lo: profile.do_lo,
        q_air_on: profile.q_air_on,
        t_amb_mean: profile.t_amb_mean,
        t_amb_amp: profile.t_amb_amp,
    };

    let steps = (SECONDS_PER_DAY / ts).round() as usize;
    let mut irradiance = Vec::with_capacity(steps);
    let mut q_dil = Vec::with_capacity(steps);
    let mut t_amb = Vec::with_capacity(steps);
    for k in 0..steps {
        let tod = k as f64 * ts;
        irradiance.push(diurnal_irradiance(tod, &schedule));
        q_dil.push(schedule.dilution_flow(tod));
        t_amb.push(schedule.ambient_temperature(tod));
    }
    DayInputs { day_index, weekend, schedule, ts, irradiance, q_dil, t_amb }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sched() -> DisturbanceSchedule {
        DisturbanceSchedule::clear_sky(1000.0, 6.0 * 3600.0, 20.0 * 3600.0)
    }

    fn quiet_params() -> PlantParams {
        PlantParams { noise_std: 0.0, ..PlantParams::default() }
    }

    fn state() -> PlantState {
        PlantState { ph: 8.1, do_conc: 12.0, temp: 22.0, t: 0.0 }
    }

    #[test]
    fn irradiance_peaks_at_noon_and_is_zero_at_night() {
        let s = sched();
        let noon = 0.5 * (s.sunrise + s.sunset);
        assert_relative_eq!(diurnal_irradiance(noon, &s), 1000.0, epsilon = 1e-9);
        assert_eq!(diurnal_irradiance(s.sunrise - 1.0, &s), 0.0);
        assert_eq!(diurnal_irradiance(s.sunset + 1.0, &s), 0.0);
    }

    #[test]
    fn cloud_attenuates_irradiance() {
        let mut s = sched();
        let noon = 0.5 * (s.sunrise + s.sunset);
        s.cloud_events.push(CloudEvent { start: noon - 60.0, duration: 600.0, attenuation: 0.6 });
        assert_relative_eq!(diurnal_irradiance(noon, &s), 400.0, epsilon = 1e-9);
    }

    #[test]
    fn air_controller_hysteresis() {
        let s = sched();
        assert_eq!(air_controller(s.do_hi + 0.1, false, &s), s.q_air_on);
        assert_eq!(air_controller(s.do_lo - 0.1, true, &s), 0.0);
        let mid = 0.5 * (s.do_lo + s.do_hi);
        assert_eq!(air_controller(mid, true, &s), s.q_air_on);
        assert_eq!(air_controller(mid, false, &s), 0.0);
    }

    #[test]
    fn idle_plant_only_respires() {
        let p = quiet_params();
        let ts = 10.0;
        let s0 = PlantState { temp: 20.0, ..state() };
        let x = ExogenousInputs { irradiance: 0.0, q_air: 0.0, q_dil: 0.0, t_amb: 20.0 };
        let out = plant_step(&s0, 0.0, &x, &p, ts, &mut rng_from(1)).unwrap();
        assert_eq!(out.state.ph, s0.ph);
        assert_relative_eq!(out.state.do_conc, s0.do_conc - ts * p.r_resp, epsilon = 1e-12);
        assert_eq!(out.state.t, ts);
    }

    #[test]
    fn co2_lowers_ph() {
        let p = quiet_params();
        let x = ExogenousInputs { irradiance: 500.0, q_air: 0.0, q_dil: 0.0, t_amb: 20.0 };
        let a = plant_step(&state(), 5.0, &x, &p, 10.0, &mut rng_from(1)).unwrap();
        let b = plant_step(&state(), 0.0, &x, &p, 10.0, &mut rng_from(1)).unwrap();
        assert!(a.state.ph < b.state.ph);
    }

    #[test]
    fn dilution_pulls_towards_medium() {
        let p = quiet_params();
        let x = ExogenousInputs { irradiance: 0.0, q_air: 0.0, q_dil: 3.0, t_amb: 20.0 };
        let out = plant_step(&state(), 0.0, &x, &p, 10.0, &mut rng_from(1)).unwrap();
        assert!(out.state.ph < state().ph && out.state.ph > p.ph_in);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = quiet_params();
        let x = ExogenousInputs { irradiance: f64::NAN, ..Default::default() };
        assert!(matches!(plant_step(&state(), 0.0, &x, &p, 10.0, &mut rng_from(1)), Err(Error::NonFinite(_))));
        let x = ExogenousInputs::default();
        assert!(plant_step(&state(), 11.0, &x, &p, 10.0, &mut rng_from(1)).is_err());
        assert!(plant_step(&state(), 1.0, &x, &p, 0.0, &mut rng_from(1)).is_err());
    }

    #[test]
    fn ph_clamp_is_reported() {
        let p = PlantParams { k_c: 1.0, ..quiet_params() };
        let x = ExogenousInputs::default();
        let out = plant_step(&state(), 10.0, &x, &p, 10.0, &mut rng_from(1)).unwrap();
        assert_eq!(out.state.ph, PH_MIN);
        assert!(out.ph_clamped);
    }

    #[test]
    fn shut_valve_delivers_nothing() {
        let p = PlantParams::default();
        let mut rng = rng_from(3);
        for _ in 0..100 {
            assert_eq!(deliver_co2(0.0, &p, &mut rng), 0.0);
            let d = deliver_co2(9.9, &p, &mut rng);
            assert!((0.0..=CO2_FLOW_MAX).contains(&d));
        }
    }

    #[test]
    fn day_inputs_are_deterministic() {
        let prof = SeasonProfile::spring();
        let a = build_day_inputs(3, &prof, 42, 10.0);
        let b = build_day_inputs(3, &prof, 42, 10.0);
        assert_eq!(a, b);
        assert_eq!(a.steps(), 8640);
        let c = build_day_inputs(4, &prof, 42, 10.0);
        assert_ne!(a.irradiance, c.irradiance);
        a.schedule.validate().unwrap();
    }

    #[test]
    fn weekend_days_only_get_topups() {
        let prof = SeasonProfile { first_weekday: 5, ..SeasonProfile::spring() };
        for day in [0, 1] {
            let d = build_day_inputs(day, &prof, 9, 10.0);
            assert!(d.weekend);
            assert!(d.schedule.dilution_pulses.iter().all(|p| p.flow == prof.topup_flow));
            assert!(d.q_dil.iter().all(|&q| q == 0.0 || q == prof.topup_flow));
        }
        let weekday = build_day_inputs(2, &prof, 9, 10.0);
        assert!(!weekday.weekend);
        assert!(weekday.q_dil.iter().any(|&q| q > prof.topup_flow));
    }

    #[test]
    fn seasons_differ() {
        let s = build_day_inputs(0, &SeasonProfile::spring(), 1, 10.0).schedule;
        let a = build_day_inputs(0, &SeasonProfile::autumn(), 1, 10.0).schedule;
        assert_ne!(s.i_max, a.i_max);
        assert_ne!(s.sunrise, a.sunrise);
        assert_ne!(s.sunset, a.sunset);
    }
}
