//! Actor and dual-input critic built from [`Mlp`] blocks.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::neural::{Activation, ForwardCache, Gradients, Mlp};
use crate::seeds::Rng;

/// Affine map between the tanh range `[-1, 1]` and the actuator range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionScale {
    pub low: f64,
    pub high: f64,
}

impl ActionScale {
    pub fn to_action(&self, tanh_out: f64) -> f64 {
        self.low + (tanh_out + 1.0) * 0.5 * (self.high - self.low)
    }

    pub fn to_unit(&self, action: f64) -> f64 {
        (action - self.low) / self.half_range() - 1.0
    }

    /// d(action)/d(tanh output).
    pub fn half_range(&self) -> f64 {
        0.5 * (self.high - self.low)
    }
}

/// Deterministic policy: `obs -> relu -> relu -> tanh -> scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    pub net: Mlp,
    pub scale: ActionScale,
}

impl Actor {
    pub fn new(obs_dim: usize, hidden: usize, scale: ActionScale, rng: &mut Rng) -> Self {
        let net = Mlp::new(&[obs_dim, hidden, hidden, 1], &[Activation::Relu, Activation::Relu, Activation::Tanh], rng);
        Self { net, scale }
    }

    pub fn act(&self, obs: &[f64]) -> Result<f64> {
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observation"));
        }
        if obs.len() != self.net.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "observation",
                expected: self.net.input_dim(),
                got: obs.len(),
            });
        }
        let t = self.net.predict_one(obs)?[0];
        Ok(self.scale.to_action(t).clamp(self.scale.low, self.scale.high))
    }

    /// Batched actions (L/min) plus the cache for [`Actor::backward`].
    pub fn forward(&self, obs: ArrayView2<f64>) -> Result<(Vec<f64>, ForwardCache)> {
        let (t, cache) = self.net.forward(obs)?;
        Ok((t.iter().map(|&t| self.scale.to_action(t)).collect(), cache))
    }

    pub fn predict(&self, obs: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(self.net.predict(obs)?.iter().map(|&t| self.scale.to_action(t)).collect())
    }

    /// Parameter gradients given d(loss)/d(action) per sample.
    pub fn backward(&self, cache: &ForwardCache, d_action: &[f64]) -> Result<Gradients> {
        let k = self.scale.half_range();
        let d_tanh = Array2::from_shape_fn((d_action.len(), 1), |(i, _)| d_action[i] * k);
        Ok(self.net.backward(cache, d_tanh.view())?.0)
    }
}

/// Anything that scores `(observation, action)` pairs and can differentiate
/// the score with respect to the action.
pub trait QFunction {
    /// Q-values and dQ/du for each row of `obs` paired with `actions`.
    fn value_and_action_grad(&self, obs: ArrayView2<f64>, actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

/// Observation and action enter through separate dense branches whose
/// outputs are concatenated and passed through a relu stack to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub obs_branch: Mlp,
    pub action_branch: Mlp,
    pub head: Mlp,
    pub scale: ActionScale,
}

pub struct CriticCache {
    obs: ForwardCache,
    action: ForwardCache,
    head: ForwardCache,
    split: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticGradients {
    pub obs_branch: Gradients,
    pub action_branch: Gradients,
    pub head: Gradients,
}

impl CriticGradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.obs_branch.slices();
        v.extend(self.action_branch.slices());
        v.extend(self.head.slices());
        v
    }
}

impl Critic {
    pub fn new(obs_dim: usize, hidden: usize, scale: ActionScale, rng: &mut Rng) -> Self {
        Self {
            obs_branch: Mlp::new(&[obs_dim, hidden], &[Activation::Relu], rng),
            action_branch: Mlp::new(&[1, hidden], &[Activation::Relu], rng),
            head: Mlp::new(&[2 * hidden, hidden, 1], &[Activation::Relu, Activation::Linear], rng),
            scale,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_branch.input_dim()
    }

    fn action_input(&self, actions: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((actions.len(), 1), |(i, _)| self.scale.to_unit(actions[i]))
    }

    pub fn forward(&self, obs: ArrayView2<f64>, actions: &[f64]) -> Result<(Vec<f64>, CriticCache)> {
        if obs.nrows() != actions.len() {
            return Err(Error::DimensionMismatch {
                context: "critic batch",
                expected: obs.nrows(),
                got: actions.len(),
            });
        }
        let (ho, obs_cache) = self.obs_branch.forward(obs)?;
        let (ha, action_cache) = self.action_branch.forward(self.action_input(actions).view())?;
        let merged = concatenate(Axis(1), &[ho.view(), ha.view()]).expect("same batch size");
        let (q, head_cache) = self.head.forward(merged.view())?;
        let cache = CriticCache { obs: obs_cache, action: action_cache, head: head_cache, split: ho.ncols() };
        Ok((q.column(0).to_vec(), cache))
    }

    pub fn predict(&self, obs: ArrayView2<f64>, actions: &[f64]) -> Result<Vec<f64>> {
        let ho = self.obs_branch.predict(obs)?;
        let ha = self.action_branch.predict(self.action_input(actions).view())?;
        let merged = concatenate(Axis(1), &[ho.view(), ha.view()]).expect("same batch size");
        Ok(self.head.predict(merged.view())?.column(0).to_vec())
    }

    fn dq_matrix(dq: &[f64]) -> Array2<f64> {
        Array2::from_shape_fn((dq.len(), 1), |(i, _)| dq[i])
    }

    /// Parameter gradients for d(loss)/dQ per sample.
    pub fn backward(&self, cache: &CriticCache, dq: &[f64]) -> Result<CriticGradients> {
        let (head, d_merged) = self.head.backward(&cache.head, Self::dq_matrix(dq).view())?;
        let (obs_branch, _) = self.obs_branch.backward(&cache.obs, d_merged.slice(s![.., ..cache.split]))?;
        let (action_branch, _) = self.action_branch.backward(&cache.action, d_merged.slice(s![.., cache.split..]))?;
        Ok(CriticGradients { obs_branch, action_branch, head })
    }

    /// d(loss)/du per sample, in L/min.
    pub fn action_gradient(&self, cache: &CriticCache, dq: &[f64]) -> Result<Vec<f64>> {
        let d_merged = self.head.backward_input(&cache.head, Self::dq_matrix(dq).view())?;
        let d_unit = self.action_branch.backward_input(&cache.action, d_merged.slice(s![.., cache.split..]))?;
        let k = 1.0 / self.scale.half_range();
        Ok(d_unit.column(0).iter().map(|g| g * k).collect())
    }

    pub fn nets(&self) -> [&Mlp; 3] {
        [&self.obs_branch, &self.action_branch, &self.head]
    }

    pub fn nets_mut(&mut self) -> [&mut Mlp; 3] {
        [&mut self.obs_branch, &mut self.action_branch, &mut self.head]
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let [a, b, c] = self.nets_mut();
        let mut v = a.param_slices_mut();
        v.extend(b.param_slices_mut());
        v.extend(c.param_slices_mut());
        v
    }

    pub fn block_lens(&self) -> Vec<usize> {
        self.nets().iter().flat_map(|n| n.param_slices().into_iter().map(<[f64]>::len)).collect()
    }

    pub fn num_params(&self) -> usize {
        self.nets().iter().map(|n| n.num_params()).sum()
    }

    pub fn blend_from(&mut self, source: &Critic, tau: f64) -> Result<()> {
        for (dst, src) in self.nets_mut().into_iter().zip(source.nets()) {
            dst.blend_from(src, tau)?;
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Critic) -> f64 {
        self.nets().iter().zip(other.nets()).map(|(a, b)| a.max_abs_diff(b)).fold(0.0, f64::max)
    }
}

impl QFunction for Critic {
    fn value_and_action_grad(&self, obs: ArrayView2<f64>, actions: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (q, cache) = self.forward(obs, actions)?;
        let ones = vec![1.0; q.len()];
        let grad = self.action_gradient(&cache, &ones)?;
        Ok((q, grad))
    }
}
