//! Fixtures shared by the benchmarks.

use raceway::seeds::rng_from;
use raceway::{Agent, AgentConfig, ObservationConfig, Transition, OBSERVATION_DIM};
use rand::Rng as _;

/// Random transitions with observation-shaped vectors.
pub fn transitions(n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| {
            let obs: Vec<f64> = (0..OBSERVATION_DIM).map(|_| rng.random_range(-1.0..1.0)).collect();
            let next_obs = obs.iter().map(|v| v * 0.99).collect();
            Transition {
                obs,
                action: rng.random_range(0.0..10.0),
                reward: rng.random_range(5.0..12.0),
                next_obs,
                active: true,
            }
        })
        .collect()
}

pub fn agent(hidden_width: usize) -> Agent {
    let config = AgentConfig { hidden_width, ..AgentConfig::default() };
    Agent::new(config, OBSERVATION_DIM, ObservationConfig::default(), &mut rng_from(1)).expect("valid config")
}
