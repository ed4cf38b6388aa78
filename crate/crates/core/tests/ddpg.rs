use ndarray::{Array2, ArrayView2};
use proptest::prelude::*;
use raceway::ddpg::{update_actor_against, ActionScale, Actor, QFunction, ReplayBuffer};
use raceway::neural::{AdamConfig, AdamState};
use raceway::seeds::rng_from;
use raceway::{Agent, AgentConfig, ObservationConfig, Transition};

/// Q(o, u) = -(u - peak)^2, independent of the observation.
struct Parabola {
    peak: f64,
}

impl QFunction for Parabola {
    fn value_and_action_grad(&self, _obs: ArrayView2<f64>, actions: &[f64]) -> raceway::Result<(Vec<f64>, Vec<f64>)> {
        let q = actions.iter().map(|u| -(u - self.peak).powi(2)).collect();
        let g = actions.iter().map(|u| -2.0 * (u - self.peak)).collect();
        Ok((q, g))
    }
}

fn random_obs(rows: usize, dim: usize, seed: u64) -> Array2<f64> {
    let mut rng = rng_from(seed);
    Array2::from_shape_simple_fn((rows, dim), || rng.random_range(-1.0..1.0))
}

#[test]
fn actor_climbs_to_the_peak_of_a_synthetic_critic() {
    let scale = ActionScale { low: 0.0, high: 10.0 };
    let mut actor = Actor::new(4, 16, scale, &mut rng_from(3));
    let mut opt = AdamState::new(AdamConfig::with_lr(1e-3), actor.net.param_slices().iter().map(|s| s.len()));
    let obs = random_obs(16, 4, 9);
    let critic = Parabola { peak: 3.0 };
    let mut last = f64::NEG_INFINITY;
    for _ in 0..3000 {
        last = update_actor_against(&mut actor, &mut opt, &critic, obs.view()).unwrap();
    }
    assert!(last > -0.05f64.powi(2), "mean Q {last}");
    for u in actor.predict(obs.view()).unwrap() {
        assert!((u - 3.0).abs() <= 0.05, "action {u}");
    }
}

fn synthetic_batch(n: usize, seed: u64) -> Vec<Transition> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| {
            let obs: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let action = rng.random_range(0.0..10.0);
            let reward = 10.0 + obs[0] - 0.3 * action;
            Transition { next_obs: obs.iter().map(|v| 0.9 * v).collect(), obs, action, reward, active: true }
        })
        .collect()
}

#[test]
fn critic_loss_trends_down_against_frozen_targets() {
    let config = AgentConfig { hidden_width: 32, lr_critic: 1e-3, ..AgentConfig::default() };
    let mut agent = Agent::new(config, 5, ObservationConfig::default(), &mut rng_from(12)).unwrap();
    let data = synthetic_batch(64, 4);
    let batch: Vec<&Transition> = data.iter().collect();
    let targets = agent.critic_target_values(&batch).unwrap();
    let losses: Vec<f64> = (0..200).map(|_| agent.fit_critic(&batch, &targets).unwrap()).collect();
    let avg: Vec<f64> = losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    for pair in avg.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-9), "moving average rose: {pair:?}");
    }
    assert!(losses[199] <= 0.1 * losses[0], "{} -> {}", losses[0], losses[199]);
}

#[test]
fn imitation_phase_recovers_logged_actions() {
    let config = AgentConfig { hidden_width: 16, batch_size: 32, imitation_lr: 3e-3, ..AgentConfig::default() };
    let mut agent = Agent::new(config, 5, ObservationConfig::default(), &mut rng_from(5)).unwrap();
    let mut data = synthetic_batch(256, 6);
    for t in &mut data {
        t.action = 5.0 + 3.0 * t.obs[1];
    }
    let buffer = ReplayBuffer::from_transitions(&data);
    let history = agent.train_imitation_epochs(&buffer, 300, 8, &mut rng_from(7)).unwrap();
    assert!(history.last().unwrap().actor_metric < 0.05, "mse {}", history.last().unwrap().actor_metric);
    // the policy optimizer is untouched by imitation
    assert_eq!(agent.actor_opt.step_count, 0);
    for t in data.iter().take(20) {
        assert!((agent.act(&t.obs).unwrap() - t.action).abs() < 0.5);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn actions_stay_in_bounds(seed in any::<u64>(), obs in prop::collection::vec(-1e6f64..1e6, 10), gain in 0.1f64..50.0) {
        let mut agent = Agent::new(
            AgentConfig { hidden_width: 8, ..AgentConfig::default() },
            10,
            ObservationConfig::default(),
            &mut rng_from(seed),
        ).unwrap();
        for layer in agent.actor.net.layers_mut() {
            layer.weights.mapv_inplace(|w| w * gain);
        }
        let u = agent.act(&obs).unwrap();
        prop_assert!((0.0..=10.0).contains(&u), "{}", u);
    }
}
