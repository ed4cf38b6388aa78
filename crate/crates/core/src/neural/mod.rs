//! Dense feed-forward networks with reverse-mode gradients for parameters and
//! inputs, an Adam optimizer, a finite-difference checker and a bit-exact
//! text checkpoint format.

mod adam;
mod checkpoint;
mod gradcheck;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{read_f64_hex, write_f64_hex, TextReader};
pub use gradcheck::{check_gradients, check_gradients_with, GradientReport, LayerError};

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(format!("unknown activation `{other}`")),
        }
    }
}

/// Fully connected layer, weights stored `[out x in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform init in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new(fan_in: usize, fan_out: usize, activation: Activation, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weights = Array2::from_shape_simple_fn((fan_out, fan_in), || rng.random_range(-bound..=bound));
        let biases = Array1::from_shape_simple_fn(fan_out, || rng.random_range(-bound..=bound));
        Self { weights, biases, activation }
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        Self { weights: Array2::zeros((fan_out, fan_in)), biases: Array1::zeros(fan_out), activation }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

/// A chain of dense layers.
///
/// Every parameter mutation bumps an internal version; a [`ForwardCache`]
/// remembers the identity and version it was computed with, and
/// [`Mlp::backward`] refuses caches from another network or an older version.
#[derive(Debug)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    id: u64,
    version: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self { layers: self.layers.clone(), id: fresh_id(), version: 0 }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations retained by [`Mlp::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    net_id: u64,
    version: u64,
    /// Input of every layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

/// Parameter gradients, one `(dW, db)` pair per layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weights.raw_dim()), Array1::zeros(l.biases.raw_dim())))
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (w, b) in &self.layers {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            *w *= factor;
            *b *= factor;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().flat_map(|(w, b)| w.iter().chain(b.iter())).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

impl Mlp {
    /// Builds a network with layer widths `dims` (input first) and one
    /// activation per layer.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Self {
        assert!(dims.len() >= 2, "need at least input and output width");
        assert_eq!(dims.len() - 1, activations.len(), "one activation per layer");
        let layers = dims.windows(2).zip(activations).map(|(w, &act)| DenseLayer::new(w[0], w[1], act, rng)).collect();
        Self::from_layers(layers).expect("dims are chained by construction")
    }

    pub fn from_layers(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidParameter("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.biases.len() != l.fan_out() {
                return Err(Error::DimensionMismatch {
                    context: "layer bias",
                    expected: l.fan_out(),
                    got: l.biases.len(),
                });
            }
            if i > 0 && layers[i - 1].fan_out() != l.fan_in() {
                return Err(Error::DimensionMismatch {
                    context: "layer chain",
                    expected: layers[i - 1].fan_out(),
                    got: l.fan_in(),
                });
            }
        }
        let layers = layers
            .into_iter()
            .map(|l| DenseLayer {
                weights: l.weights.as_standard_layout().into_owned(),
                biases: l.biases.as_standard_layout().into_owned(),
                activation: l.activation,
            })
            .collect();
        Ok(Self { layers, id: fresh_id(), version: 0 })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding caches.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.weights.as_slice().expect("standard layout"));
            out.push(l.biases.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.weights.as_slice_mut().expect("standard layout"));
            out.push(l.biases.as_slice_mut().expect("standard layout"));
        }
        out
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut a = x.as_standard_layout().into_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.biases;
            let act = layer.activation;
            let out = z.mapv(|v| act.apply(v));
            inputs.push(a);
            pre_activations.push(z);
            a = out;
        }
        let cache = ForwardCache { net_id: self.id, version: self.version, inputs, pre_activations, output: a.clone() };
        Ok((a, cache))
    }

    /// Forward pass without keeping a cache.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        let mut a = x.to_owned();
        for layer in &self.layers {
            let mut z = a.dot(&layer.weights.t());
            z += &layer.biases;
            let act = layer.activation;
            z.mapv_inplace(|v| act.apply(v));
            a = z;
        }
        Ok(a)
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).map_err(|_| Error::DimensionMismatch {
            context: "network input",
            expected: self.input_dim(),
            got: x.len(),
        })?;
        Ok(self.predict(view)?.into_raw_vec_and_offset().0)
    }

    fn check_cache(&self, cache: &ForwardCache, dy: &ArrayView2<f64>) -> Result<()> {
        if cache.net_id != self.id || cache.version != self.version || cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if dy.dim() != cache.output.dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: cache.output.ncols(),
                got: dy.ncols(),
            });
        }
        Ok(())
    }

    /// Gradients of a loss w.r.t. every parameter and the input, given the
    /// loss gradient `dy` w.r.t. the batched output.
    pub fn backward(&self, cache: &ForwardCache, dy: ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)> {
        self.check_cache(cache, &dy)?;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = dy.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let dz = self.local_delta(l, cache, delta);
            let mut dw = dz.t().dot(&cache.inputs[l]);
            if !dw.is_standard_layout() {
                dw = dw.as_standard_layout().into_owned();
            }
            let db = dz.sum_axis(Axis(0));
            grads.push((dw, db));
            delta = dz.dot(&layer.weights);
        }
        grads.reverse();
        Ok((Gradients { layers: grads }, delta))
    }

    /// Input gradient only; skips the weight-gradient products.
    pub fn backward_input(&self, cache: &ForwardCache, dy: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_cache(cache, &dy)?;
        let mut delta = dy.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let dz = self.local_delta(l, cache, delta);
            delta = dz.dot(&layer.weights);
        }
        Ok(delta)
    }

    fn local_delta(&self, l: usize, cache: &ForwardCache, mut delta: Array2<f64>) -> Array2<f64> {
        let act = self.layers[l].activation;
        if act == Activation::Linear {
            return delta;
        }
        let z = &cache.pre_activations[l];
        let a = if l + 1 < cache.inputs.len() { &cache.inputs[l + 1] } else { &cache.output };
        ndarray::Zip::from(&mut delta).and(z).and(a).for_each(|d, &z, &a| *d *= act.derivative(z, a));
        delta
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn blend_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        self.ensure_same_shape(source)?;
        for (dst, src) in self.param_slices_mut().into_iter().zip(source.param_slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = tau * s + (1.0 - tau) * *d;
            }
        }
        Ok(())
    }

    pub fn copy_from(&mut self, source: &Mlp) -> Result<()> {
        self.ensure_same_shape(source)?;
        for (dst, src) in self.param_slices_mut().into_iter().zip(source.param_slices()) {
            dst.copy_from_slice(src);
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weights.dim() == b.weights.dim() && a.activation == b.activation)
    }

    fn ensure_same_shape(&self, other: &Mlp) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                context: "network shape",
                expected: self.num_params(),
                got: other.num_params(),
            })
        }
    }

    /// Largest absolute parameter difference to a same-shaped network.
    pub fn max_abs_diff(&self, other: &Mlp) -> f64 {
        self.param_slices()
            .into_iter()
            .zip(other.param_slices())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}
