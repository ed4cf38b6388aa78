//! Deep deterministic policy gradient agent trained from logged transitions.
//!
//! There is no exploration noise anywhere: the agent learns from expert
//! trajectories and, once deployed, from the transitions its own policy
//! produces.

mod buffer;
mod checkpoint;
mod networks;

pub use buffer::ReplayBuffer;
pub use networks::{ActionScale, Actor, Critic, CriticCache, CriticGradients, QFunction};

use std::fmt;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::control::ObservationConfig;
use crate::error::{Error, Result};
use crate::neural::{AdamConfig, AdamState};
use crate::seeds::Rng;

/// One `(o, u, r, o')` experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Applied CO2 flow, L/min.
    pub action: f64,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// The activation gate was on at both ends of the transition.
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lr_critic: f64,
    pub lr_actor: f64,
    pub action_low: f64,
    pub action_high: f64,
    pub hidden_width: usize,
    pub offline_epochs: usize,
    pub finetune_epochs: usize,
    /// Leading offline epochs in which the actor regresses onto the logged
    /// actions instead of following the critic; they count towards
    /// `offline_epochs`.
    pub imitation_epochs: usize,
    /// Adam step size of the imitation phase.
    pub imitation_lr: f64,
    /// Mini-batch updates per epoch; `None` means one pass, `ceil(N / M)`.
    pub updates_per_epoch: Option<usize>,
    /// Replay capacity during deployment; `None` means the offline dataset size.
    pub buffer_capacity: Option<usize>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            tau: 0.01,
            batch_size: 64,
            lr_critic: 1e-4,
            lr_actor: 1e-5,
            action_low: 0.0,
            action_high: 10.0,
            hidden_width: 256,
            offline_epochs: 4000,
            finetune_epochs: 50,
            imitation_epochs: 0,
            imitation_lr: 1e-3,
            updates_per_epoch: None,
            buffer_capacity: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(format!("agent: {m}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad(format!("gamma must be in [0, 1], got {}", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if self.batch_size == 0 || self.hidden_width == 0 {
            return bad("batch_size and hidden_width must be >= 1".into());
        }
        if !(self.action_low < self.action_high) {
            return bad("action_low must be below action_high".into());
        }
        if !(self.lr_actor >= 0.0 && self.lr_critic >= 0.0 && self.imitation_lr >= 0.0) {
            return bad("learning rates must be >= 0".into());
        }
        if self.updates_per_epoch == Some(0) || self.buffer_capacity == Some(0) {
            return bad("updates_per_epoch and buffer_capacity must be >= 1 when set".into());
        }
        Ok(())
    }

    /// Reduced-cost preset used by the acceptance runs and the shipped desk
    /// config: narrower networks, a faster critic, a fixed number of updates
    /// per epoch, and an imitation warm-start before policy-gradient epochs.
    pub fn desk() -> Self {
        Self {
            hidden_width: 64,
            lr_critic: 1e-3,
            updates_per_epoch: Some(8),
            offline_epochs: 2500,
            imitation_epochs: 2000,
            ..Self::default()
        }
    }

    pub fn scale(&self) -> ActionScale {
        ActionScale { low: self.action_low, high: self.action_high }
    }

    /// Mini-batch updates making up one epoch over `n` transitions.
    pub fn updates_per_epoch(&self, n: usize) -> usize {
        self.updates_per_epoch.unwrap_or_else(|| n.div_ceil(self.batch_size).max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Actor regression onto logged actions.
    Imitation,
    /// Policy-gradient ascent on the critic.
    PolicyGradient,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Imitation => "imitation",
            Phase::PolicyGradient => "policy-gradient",
        })
    }
}

impl std::str::FromStr for Phase {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "imitation" => Ok(Phase::Imitation),
            "policy-gradient" => Ok(Phase::PolicyGradient),
            other => Err(format!("unknown training phase `{other}`")),
        }
    }
}

/// Training diagnostics averaged over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub phase: Phase,
    pub critic_loss: f64,
    /// Mean Q of the policy's actions, or the imitation mean squared error.
    pub actor_metric: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub config: AgentConfig,
    /// Normalization the observations were built with; travels with checkpoints.
    pub normalization: ObservationConfig,
    pub actor: Actor,
    pub critic: Critic,
    pub actor_target: Actor,
    pub critic_target: Critic,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
}

fn stack_rows<'a>(rows: impl ExactSizeIterator<Item = &'a [f64]>, dim: usize) -> Result<Array2<f64>> {
    let n = rows.len();
    let mut out = Array2::zeros((n, dim));
    for (i, r) in rows.enumerate() {
        if r.len() != dim {
            return Err(Error::DimensionMismatch { context: "observation batch", expected: dim, got: r.len() });
        }
        out.row_mut(i).as_slice_mut().expect("standard layout").copy_from_slice(r);
    }
    Ok(out)
}

/// One gradient-ascent step of `actor` on the mean of `critic(o, actor(o))`.
/// Returns that mean before the step.
pub fn update_actor_against<Q: QFunction>(
    actor: &mut Actor,
    opt: &mut AdamState,
    critic: &Q,
    obs: ArrayView2<f64>,
) -> Result<f64> {
    let (actions, cache) = actor.forward(obs)?;
    let (q, dq_du) = critic.value_and_action_grad(obs, &actions)?;
    let m = q.len() as f64;
    let objective = q.iter().sum::<f64>() / m;
    if !objective.is_finite() {
        return Err(Error::NonFinite("actor objective"));
    }
    // ascent on J = mean(Q): descend on -J
    let d_action: Vec<f64> = dq_du.iter().map(|g| -g / m).collect();
    let grads = actor.backward(&cache, &d_action)?;
    opt.step(&mut actor.net.param_slices_mut(), &grads.slices())?;
    Ok(objective)
}

impl Agent {
    pub fn new(config: AgentConfig, obs_dim: usize, normalization: ObservationConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let scale = config.scale();
        let actor = Actor::new(obs_dim, config.hidden_width, scale, rng);
        let critic = Critic::new(obs_dim, config.hidden_width, scale, rng);
        let actor_opt =
            AdamState::new(AdamConfig::with_lr(config.lr_actor), actor.net.param_slices().iter().map(|s| s.len()));
        let critic_opt = AdamState::new(AdamConfig::with_lr(config.lr_critic), critic.block_lens());
        Ok(Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            config,
            normalization,
            actor,
            critic,
            actor_opt,
            critic_opt,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.actor.net.input_dim()
    }

    pub fn act(&self, obs: &[f64]) -> Result<f64> {
        self.actor.act(obs)
    }

    fn obs_matrix(&self, batch: &[&Transition], next: bool) -> Result<Array2<f64>> {
        let dim = self.obs_dim();
        if next {
            stack_rows(batch.iter().map(|t| t.next_obs.as_slice()), dim)
        } else {
            stack_rows(batch.iter().map(|t| t.obs.as_slice()), dim)
        }
    }

    /// Bootstrapped targets `r + gamma * Q_T(o', pi_T(o'))`. The task is
    /// continuing, so every transition bootstraps.
    pub fn critic_target_values(&self, batch: &[&Transition]) -> Result<Vec<f64>> {
        let next = self.obs_matrix(batch, true)?;
        let next_actions = self.actor_target.predict(next.view())?;
        let q_next = self.critic_target.predict(next.view(), &next_actions)?;
        Ok(batch.iter().zip(q_next).map(|(t, q)| t.reward + self.config.gamma * q).collect())
    }

    /// One Adam step on the mean squared TD error; returns the loss before
    /// the step.
    pub fn update_critic(&mut self, batch: &[&Transition]) -> Result<f64> {
        let targets = self.critic_target_values(batch)?;
        self.fit_critic(batch, &targets)
    }

    /// Critic regression step towards explicit targets.
    pub fn fit_critic(&mut self, batch: &[&Transition], targets: &[f64]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidParameter("empty mini-batch".into()));
        }
        let obs = self.obs_matrix(batch, false)?;
        let actions: Vec<f64> = batch.iter().map(|t| t.action).collect();
        let (q, cache) = self.critic.forward(obs.view(), &actions)?;
        let m = q.len() as f64;
        let residuals: Vec<f64> = targets.iter().zip(&q).map(|(y, q)| y - q).collect();
        let loss = residuals.iter().map(|r| r * r).sum::<f64>() / m;
        if !loss.is_finite() {
            return Err(Error::NonFinite("critic loss"));
        }
        let dq: Vec<f64> = residuals.iter().map(|r| -2.0 * r / m).collect();
        let grads = self.critic.backward(&cache, &dq)?;
        self.critic_opt.step(&mut self.critic.param_slices_mut(), &grads.slices())?;
        Ok(loss)
    }

    pub fn update_actor(&mut self, batch: &[&Transition]) -> Result<f64> {
        let obs = self.obs_matrix(batch, false)?;
        update_actor_against(&mut self.actor, &mut self.actor_opt, &self.critic, obs.view())
    }

    /// One step of supervised regression of the actor onto the logged
    /// actions, using `opt`; returns the pre-step mean squared error in L/min.
    pub fn imitate(&mut self, batch: &[&Transition], opt: &mut AdamState) -> Result<f64> {
        let obs = self.obs_matrix(batch, false)?;
        let (actions, cache) = self.actor.forward(obs.view())?;
        let m = batch.len() as f64;
        let loss = batch.iter().zip(&actions).map(|(t, a)| (a - t.action).powi(2)).sum::<f64>() / m;
        if !loss.is_finite() {
            return Err(Error::NonFinite("imitation loss"));
        }
        let d_action: Vec<f64> = batch.iter().zip(&actions).map(|(t, a)| 2.0 * (a - t.action) / m).collect();
        let grads = self.actor.backward(&cache, &d_action)?;
        opt.step(&mut self.actor.net.param_slices_mut(), &grads.slices())?;
        Ok(loss)
    }

    /// Blends both target networks towards the main networks by `tau`.
    pub fn soft_update(&mut self) -> Result<()> {
        let tau = self.config.tau;
        self.actor_target.net.blend_from(&self.actor.net, tau)?;
        self.critic_target.blend_from(&self.critic, tau)
    }

    /// Runs `epochs * updates_per_epoch` iterations of sample, critic update,
    /// actor update, soft update.
    pub fn train_epochs(
        &mut self,
        buffer: &ReplayBuffer,
        epochs: usize,
        updates_per_epoch: usize,
        rng: &mut Rng,
    ) -> Result<Vec<EpochStats>> {
        if epochs == 0 {
            return Ok(Vec::new());
        }
        if buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut critic_sum = 0.0;
            let mut actor_sum = 0.0;
            for _ in 0..updates_per_epoch {
                let batch = buffer.sample(self.config.batch_size, rng)?;
                let diverged = |e: Error| Error::Diverged { epoch, what: e.to_string() };
                critic_sum += self.update_critic(&batch).map_err(diverged)?;
                actor_sum += self.update_actor(&batch).map_err(diverged)?;
                self.soft_update()?;
            }
            let n = updates_per_epoch.max(1) as f64;
            history.push(EpochStats {
                epoch,
                phase: Phase::PolicyGradient,
                critic_loss: critic_sum / n,
                actor_metric: actor_sum / n,
            });
        }
        Ok(history)
    }

    /// Like [`Agent::train_epochs`] with the actor update replaced by a
    /// regression step onto the logged actions, so the critic evaluates the
    /// cloned behaviour policy. Uses a fresh optimizer at `imitation_lr`.
    pub fn train_imitation_epochs(
        &mut self,
        buffer: &ReplayBuffer,
        epochs: usize,
        updates_per_epoch: usize,
        rng: &mut Rng,
    ) -> Result<Vec<EpochStats>> {
        if epochs == 0 {
            return Ok(Vec::new());
        }
        if buffer.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let mut opt = AdamState::new(AdamConfig::with_lr(self.config.imitation_lr), self.actor_opt.block_lens());
        let mut history = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            let mut critic_sum = 0.0;
            let mut actor_sum = 0.0;
            for _ in 0..updates_per_epoch {
                let batch = buffer.sample(self.config.batch_size, rng)?;
                let diverged = |e: Error| Error::Diverged { epoch, what: e.to_string() };
                critic_sum += self.update_critic(&batch).map_err(diverged)?;
                actor_sum += self.imitate(&batch, &mut opt).map_err(diverged)?;
                self.soft_update()?;
            }
            let n = updates_per_epoch.max(1) as f64;
            history.push(EpochStats {
                epoch,
                phase: Phase::Imitation,
                critic_loss: critic_sum / n,
                actor_metric: actor_sum / n,
            });
        }
        Ok(history)
    }

    /// Largest parameter gap between main and target networks.
    pub fn target_gap(&self) -> f64 {
        self.actor.net.max_abs_diff(&self.actor_target.net).max(self.critic.max_abs_diff(&self.critic_target))
    }
}
