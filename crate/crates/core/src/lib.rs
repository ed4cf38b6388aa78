//! pH control of an open raceway photobioreactor with a DDPG agent trained
//! offline on PID trajectories and fine-tuned once per simulated day.
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod ddpg;
pub mod error;
pub mod io;
pub mod neural;
pub mod pipeline;
pub mod plant;
pub mod seeds;

pub use config::RunConfig;
pub use control::{ObservationConfig, PidConfig, OBSERVATION_DIM};
pub use ddpg::{Agent, AgentConfig, EpochStats, Phase, ReplayBuffer, Transition};
pub use error::{Error, Result};
pub use pipeline::{ControllerId, EpisodeTrace, MetricsRow, Scenario, TraceRecord};
pub use plant::{PlantParams, SeasonProfile};
pub use seeds::SeedPlan;
