//! Dataset collection under the PI expert, offline training, deployment with
//! daily fine-tuning on a rolling buffer, and the comparison metrics.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::control::{
    activation_gate, build_observation, pid_step, reward_log, Measurements, ObservationConfig, PidConfig, PidState,
    DEFAULT_REWARD_EPS, OBSERVATION_DIM,
};
use crate::ddpg::{Agent, AgentConfig, EpochStats, ReplayBuffer, Transition};
use crate::error::{Error, Result};
use crate::plant::{
    air_controller, build_day_inputs, deliver_co2, plant_step, DayInputs, PlantParams, PlantState, SeasonProfile,
};
use crate::seeds::{rng_from, SeedPlan};

/// Reactor condition at midnight of the first simulated day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConditions {
    pub ph: f64,
    pub do_conc: f64,
    pub temp: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self { ph: 8.0, do_conc: 8.0, temp: 15.0 }
    }
}

impl InitialConditions {
    pub fn state(&self) -> PlantState {
        PlantState { ph: self.ph, do_conc: self.do_conc, temp: self.temp, t: 0.0 }
    }
}

/// Everything a closed-loop run depends on apart from seeds and the agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub plant: PlantParams,
    pub initial: InitialConditions,
    pub pid: PidConfig,
    pub observation: ObservationConfig,
    pub train_season: SeasonProfile,
    pub test_season: SeasonProfile,
    pub train_days: u32,
    pub test_days: u32,
    pub reward_eps: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            plant: PlantParams::default(),
            initial: InitialConditions::default(),
            pid: PidConfig::default(),
            observation: ObservationConfig::default(),
            train_season: SeasonProfile::spring(),
            test_season: SeasonProfile::autumn(),
            train_days: 2,
            test_days: 3,
            reward_eps: DEFAULT_REWARD_EPS,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.plant.validate()?;
        self.pid.validate()?;
        self.observation.validate()?;
        self.train_season.validate()?;
        self.test_season.validate()?;
        if !(self.reward_eps > 0.0) {
            return Err(Error::InvalidParameter("reward eps must be > 0".into()));
        }
        Ok(())
    }

    pub fn ts(&self) -> f64 {
        self.pid.ts
    }

    pub fn build_days(&self, profile: &SeasonProfile, count: u32, seed: u64) -> Vec<DayInputs> {
        (0..count).map(|d| build_day_inputs(d, profile, seed, self.ts())).collect()
    }

    /// Stable 64-bit FNV-1a digest of the scenario, recorded in trace metadata.
    pub fn fingerprint(&self) -> u64 {
        fnv1a(format!("{self:?}").as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerId {
    Pid,
    Rl,
    RlFt,
}

impl fmt::Display for ControllerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ControllerId::Pid => "PID",
            ControllerId::Rl => "RL",
            ControllerId::RlFt => "RL-FT",
        })
    }
}

impl std::str::FromStr for ControllerId {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "PID" => Ok(ControllerId::Pid),
            "RL" => Ok(ControllerId::Rl),
            "RL-FT" => Ok(ControllerId::RlFt),
            other => Err(format!("unknown controller `{other}`")),
        }
    }
}

/// Signals at one sampling instant, before the plant is advanced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub ph: f64,
    pub setpoint: f64,
    /// Commanded CO2 flow, L/min.
    pub u: f64,
    pub irradiance: f64,
    pub do_conc: f64,
    pub temp: f64,
    pub q_air: f64,
    pub q_dil: f64,
    pub e: f64,
    pub integral_e: f64,
    pub reward: f64,
    pub gate_active: bool,
    /// Flow the valve actually delivered, L/min.
    pub u_applied: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    pub controller: ControllerId,
    pub seed: u64,
    pub config_hash: u64,
    pub ts: f64,
    pub records: Vec<TraceRecord>,
    /// Steps on which the pH clamp of the plant was active.
    pub ph_clamp_steps: usize,
    /// Observations with at least one channel outside its normalization range.
    pub clipped_observations: usize,
    pub fine_tune_events: usize,
}

impl EpisodeTrace {
    pub fn active_steps(&self) -> usize {
        self.records.iter().filter(|r| r.gate_active).count()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub controller: ControllerId,
    /// pH s.
    pub iae: f64,
    /// L/min s.
    pub cce: f64,
}

/// IAE and CCE over gate-active steps; control moves are only differenced
/// between consecutive active steps.
pub fn compute_metrics(trace: &EpisodeTrace) -> MetricsRow {
    let ts = trace.ts;
    let mut iae = 0.0;
    let mut cce = 0.0;
    let mut prev: Option<f64> = None;
    for r in &trace.records {
        if r.gate_active {
            iae += r.e.abs() * ts;
            if let Some(p) = prev {
                cce += (r.u - p).abs() * ts;
            }
            prev = Some(r.u);
        } else {
            prev = None;
        }
    }
    MetricsRow { controller: trace.controller, iae, cce }
}

enum Policy<'a> {
    Pid,
    Agent { agent: &'a mut Agent, buffer: &'a mut ReplayBuffer, fine_tune: bool, replay_seed: u64 },
}

struct LoopOutput {
    trace: EpisodeTrace,
    transitions: Vec<Transition>,
    fine_tune_history: Vec<Vec<EpochStats>>,
}

fn simulate(
    scenario: &Scenario,
    days: &[DayInputs],
    plant_seed: u64,
    controller: ControllerId,
    mut policy: Policy<'_>,
) -> Result<LoopOutput> {
    scenario.validate()?;
    let ts = scenario.ts();
    let obs_cfg = &scenario.observation;
    let sp = obs_cfg.setpoint;
    let p = &scenario.plant;
    if let Policy::Agent { agent, .. } = &policy {
        if agent.obs_dim() != OBSERVATION_DIM {
            return Err(Error::DimensionMismatch {
                context: "agent observation",
                expected: OBSERVATION_DIM,
                got: agent.obs_dim(),
            });
        }
    }

    let mut rng = rng_from(plant_seed);
    let mut replay_rng = match &policy {
        Policy::Agent { replay_seed, .. } => Some(rng_from(*replay_seed)),
        Policy::Pid => None,
    };
    let total: usize = days.iter().map(DayInputs::steps).sum();
    let mut trace = EpisodeTrace {
        controller,
        seed: plant_seed,
        config_hash: scenario.fingerprint(),
        ts,
        records: Vec::with_capacity(total),
        ph_clamp_steps: 0,
        clipped_observations: 0,
        fine_tune_events: 0,
    };
    let mut transitions = Vec::new();
    let mut fine_tune_history = Vec::new();

    let mut state = scenario.initial.state();
    let mut air_on = false;
    let mut active = false;
    let mut pid = PidState::default();
    let mut co2_prev = 0.0;
    let mut pending: Option<([f64; OBSERVATION_DIM], f64)> = None;

    for day in days {
        if (day.ts - ts).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("day sampled at {} s, controller at {ts} s", day.ts)));
        }
        for k in 0..day.steps() {
            let q_air = air_controller(state.do_conc, air_on, &day.schedule);
            air_on = q_air > 0.0;
            let x = day.exogenous(k, q_air);
            let was_active = active;
            active = activation_gate(x.irradiance, state.ph, sp, was_active);
            let e = sp - state.ph;

            let mut u = 0.0;
            let mut obs = None;
            if active {
                if !was_active {
                    pid = PidState::default();
                }
                match &policy {
                    Policy::Pid => {
                        let (cmd, next) = pid_step(e, &pid, &scenario.pid, obs_cfg.int_clip);
                        pid = next;
                        u = cmd;
                    }
                    Policy::Agent { .. } => {
                        pid.accumulate(e, ts, obs_cfg.int_clip);
                    }
                }
                let meas = Measurements {
                    temp: state.temp,
                    irradiance: x.irradiance,
                    do_conc: state.do_conc,
                    q_dil: x.q_dil,
                    q_air,
                    co2_prev,
                };
                let o = build_observation(&meas, e, pid.integral_e, state.time_of_day(), obs_cfg);
                trace.clipped_observations += usize::from(o.clipped);
                if let Policy::Agent { agent, .. } = &policy {
                    u = agent.act(&o.values)?;
                }
                if let Some((prev_obs, prev_action)) = pending.take() {
                    let t = Transition {
                        obs: prev_obs.to_vec(),
                        action: prev_action,
                        reward: reward_log(e, scenario.reward_eps),
                        next_obs: o.values.to_vec(),
                        active: true,
                    };
                    match &mut policy {
                        Policy::Pid => transitions.push(t),
                        Policy::Agent { buffer, .. } => {
                            buffer.push(t);
                        }
                    }
                }
                obs = Some(o.values);
            } else {
                pid = PidState::default();
                pending = None;
            }

            let applied = deliver_co2(u, p, &mut rng);
            let outcome = plant_step(&state, applied, &x, p, ts, &mut rng)?;
            trace.ph_clamp_steps += usize::from(outcome.ph_clamped);
            trace.records.push(TraceRecord {
                t: state.t,
                ph: state.ph,
                setpoint: sp,
                u,
                irradiance: x.irradiance,
                do_conc: state.do_conc,
                temp: state.temp,
                q_air,
                q_dil: x.q_dil,
                e: if active { e } else { 0.0 },
                integral_e: pid.integral_e,
                reward: if active { reward_log(e, scenario.reward_eps) } else { 0.0 },
                gate_active: active,
                u_applied: applied,
            });
            if let Some(o) = obs {
                pending = Some((o, applied));
            }
            co2_prev = applied;
            state = outcome.state;
        }

        if let Policy::Agent { agent, buffer, fine_tune: true, .. } = &mut policy {
            let rng = replay_rng.as_mut().expect("agent policy has a replay rng");
            let epochs = agent.config.finetune_epochs;
            let updates = agent.config.updates_per_epoch(buffer.len());
            let history =
                if buffer.is_empty() { Vec::new() } else { agent.train_epochs(buffer, epochs, updates, rng)? };
            fine_tune_history.push(history);
            trace.fine_tune_events += 1;
        }
    }
    Ok(LoopOutput { trace, transitions, fine_tune_history })
}

/// Closed PI loop over `days`; returns the gate-active transitions and the
/// full trace.
pub fn collect_pid_dataset(
    scenario: &Scenario,
    days: &[DayInputs],
    plant_seed: u64,
) -> Result<(Vec<Transition>, EpisodeTrace)> {
    if days.is_empty() {
        return Err(Error::InvalidParameter("collection needs at least one day".into()));
    }
    let out = simulate(scenario, days, plant_seed, ControllerId::Pid, Policy::Pid)?;
    let steps = out.trace.records.len();
    if out.trace.ph_clamp_steps * 10 > steps {
        return Err(Error::UnstableRun { clamped: out.trace.ph_clamp_steps, steps });
    }
    Ok((out.transitions, out.trace))
}

/// PI loop trace without the dataset or the stability check.
pub fn run_pid(scenario: &Scenario, days: &[DayInputs], plant_seed: u64) -> Result<EpisodeTrace> {
    Ok(simulate(scenario, days, plant_seed, ControllerId::Pid, Policy::Pid)?.trace)
}

/// Fresh agent trained for `config.offline_epochs` on `dataset`.
pub fn offline_train(
    dataset: &[Transition],
    config: &AgentConfig,
    normalization: &ObservationConfig,
    init_seed: u64,
    replay_seed: u64,
) -> Result<(Agent, Vec<EpochStats>)> {
    let mut agent = Agent::new(config.clone(), OBSERVATION_DIM, normalization.clone(), &mut rng_from(init_seed))?;
    if config.offline_epochs == 0 {
        return Ok((agent, Vec::new()));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let buffer = ReplayBuffer::from_transitions(dataset);
    let updates = config.updates_per_epoch(buffer.len());
    let mut rng = rng_from(replay_seed);
    let imitation = config.imitation_epochs.min(config.offline_epochs);
    let mut history = agent.train_imitation_epochs(&buffer, imitation, updates, &mut rng)?;
    let mut rest = agent.train_epochs(&buffer, config.offline_epochs - imitation, updates, &mut rng)?;
    for s in &mut rest {
        s.epoch += imitation;
    }
    history.append(&mut rest);
    Ok((agent, history))
}

/// Continues policy-gradient training of `agent` on `dataset`.
pub fn train_more(
    agent: &mut Agent,
    dataset: &[Transition],
    epochs: usize,
    replay_seed: u64,
) -> Result<Vec<EpochStats>> {
    if epochs == 0 {
        return Ok(Vec::new());
    }
    if dataset.is_empty() {
        return Err(Error::EmptyBuffer);
    }
    let buffer = ReplayBuffer::from_transitions(dataset);
    let updates = agent.config.updates_per_epoch(buffer.len());
    agent.train_epochs(&buffer, epochs, updates, &mut rng_from(replay_seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Deployment {
    pub trace: EpisodeTrace,
    pub agent: Agent,
    pub buffer: ReplayBuffer,
    /// Training diagnostics of each end-of-day fine-tuning run.
    pub fine_tune_history: Vec<Vec<EpochStats>>,
}

/// Runs `agent` in closed loop. The rolling buffer starts from the newest
/// `buffer_capacity` entries of `dataset`; with `fine_tune`, the agent is
/// retrained on it at the end of every simulated day.
pub fn deploy(
    agent: &Agent,
    scenario: &Scenario,
    days: &[DayInputs],
    dataset: &[Transition],
    fine_tune: bool,
    plant_seed: u64,
    replay_seed: u64,
) -> Result<Deployment> {
    if agent.normalization != scenario.observation {
        return Err(Error::InvalidParameter("agent was trained with a different observation normalization".into()));
    }
    let mut agent = agent.clone();
    let capacity = agent.config.buffer_capacity.unwrap_or(dataset.len()).max(1);
    let mut buffer = ReplayBuffer::new(capacity);
    buffer.extend(dataset.iter().cloned());
    let id = if fine_tune { ControllerId::RlFt } else { ControllerId::Rl };
    let policy = Policy::Agent { agent: &mut agent, buffer: &mut buffer, fine_tune, replay_seed };
    let out = simulate(scenario, days, plant_seed, id, policy)?;
    Ok(Deployment { trace: out.trace, agent, buffer, fine_tune_history: out.fine_tune_history })
}

/// Full three-arm study for one global seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub seed: u64,
    pub rows: [MetricsRow; 3],
    pub traces: [EpisodeTrace; 3],
    pub training_trace: EpisodeTrace,
    pub dataset_len: usize,
    pub offline_history: Vec<EpochStats>,
    pub offline_agent: Agent,
    pub fine_tuned_agent: Agent,
}

impl Comparison {
    pub fn row(&self, id: ControllerId) -> &MetricsRow {
        self.rows.iter().find(|r| r.controller == id).expect("all three arms present")
    }

    /// IAE and CCE both strictly decrease from PID to RL to RL-FT.
    pub fn ordering_holds(&self) -> bool {
        let [pid, rl, ft] = [ControllerId::Pid, ControllerId::Rl, ControllerId::RlFt].map(|c| self.row(c));
        ft.iae < rl.iae && rl.iae < pid.iae && ft.cce < rl.cce && rl.cce < pid.cce
    }
}

/// Collects on the training season, trains offline, then runs PID, RL and
/// RL-FT on the same test days with the same plant noise.
pub fn compare_experiment(scenario: &Scenario, agent_config: &AgentConfig, seed: u64) -> Result<Comparison> {
    let plan = SeedPlan::from_global(seed);
    let train_days = scenario.build_days(&scenario.train_season, scenario.train_days, plan.weather_train);
    let (dataset, training_trace) = collect_pid_dataset(scenario, &train_days, plan.plant)?;
    let (offline_agent, offline_history) =
        offline_train(&dataset, agent_config, &scenario.observation, plan.agent_init, plan.replay)?;

    let test_days = scenario.build_days(&scenario.test_season, scenario.test_days, plan.weather_test);
    let pid_trace = run_pid(scenario, &test_days, plan.plant)?;
    let rl = deploy(&offline_agent, scenario, &test_days, &dataset, false, plan.plant, plan.replay)?;
    let ft = deploy(&offline_agent, scenario, &test_days, &dataset, true, plan.plant, plan.replay)?;

    let rows = [compute_metrics(&pid_trace), compute_metrics(&rl.trace), compute_metrics(&ft.trace)];
    Ok(Comparison {
        seed,
        rows,
        traces: [pid_trace, rl.trace, ft.trace],
        training_trace,
        dataset_len: dataset.len(),
        offline_history,
        offline_agent,
        fine_tuned_agent: ft.agent,
    })
}
