//! Central finite-difference verification of [`Mlp::backward`].

use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

use super::{Gradients, Mlp};
use crate::error::Result;
use crate::seeds::rng_from;

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;
/// Relative errors are taken against `max(|analytic|, |numeric|, 1)`, so
/// gradients below unit magnitude are compared in absolute terms.
pub const MAGNITUDE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LayerError {
    pub weights: f64,
    pub biases: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub layers: Vec<LayerError>,
    pub input: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradientReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }

    /// Indices of layers whose weight or bias error exceeds the tolerance.
    pub fn failing_layers(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter(|(_, e)| e.weights >= self.tolerance || e.biases >= self.tolerance)
            .map(|(i, _)| i)
            .collect()
    }
}

fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Scalar probe loss `sum(c * y)` with fixed pseudo-random weights `c`.
fn probe_weights(rows: usize, cols: usize) -> Array2<f64> {
    let mut rng = rng_from(0x6772_6164_6368_6b00);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn probe_loss(net: &Mlp, x: ArrayView2<f64>, c: &Array2<f64>) -> Result<f64> {
    Ok((net.predict(x)? * c).sum())
}

/// Compares [`Mlp::backward`] with central differences on every parameter
/// and every input entry.
pub fn check_gradients(net: &Mlp, x: ArrayView2<f64>, tolerance: f64) -> Result<GradientReport> {
    check_gradients_with(net, x, tolerance, |net, x, c| {
        let (_, cache) = net.forward(x)?;
        net.backward(&cache, c)
    })
}

/// Like [`check_gradients`] with a caller-supplied analytic gradient, which
/// receives the network, the input and the output-gradient weights.
pub fn check_gradients_with<F>(net: &Mlp, x: ArrayView2<f64>, tolerance: f64, analytic: F) -> Result<GradientReport>
where
    F: Fn(&Mlp, ArrayView2<f64>, ArrayView2<f64>) -> Result<(Gradients, Array2<f64>)>,
{
    let c = probe_weights(x.nrows(), net.output_dim());
    let (grads, dx) = analytic(net, x, c.view())?;

    let mut probe = net.clone();
    let mut layers = Vec::with_capacity(net.layers().len());
    let analytic_blocks = grads.slices();
    for (block, analytic_block) in analytic_blocks.iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..analytic_block.len() {
            let original = probe.param_slices()[block][i];
            probe.param_slices_mut()[block][i] = original + FD_STEP;
            let plus = probe_loss(&probe, x, &c)?;
            probe.param_slices_mut()[block][i] = original - FD_STEP;
            let minus = probe_loss(&probe, x, &c)?;
            probe.param_slices_mut()[block][i] = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(rel_error(analytic_block[i], numeric));
        }
        if block % 2 == 0 {
            layers.push(LayerError { weights: worst, biases: 0.0 });
        } else {
            layers.last_mut().expect("weights precede biases").biases = worst;
        }
    }

    let mut xp = x.to_owned();
    let mut input = 0.0f64;
    for idx in 0..xp.len() {
        let (r, col) = (idx / xp.ncols(), idx % xp.ncols());
        let original = xp[[r, col]];
        xp[[r, col]] = original + FD_STEP;
        let plus = probe_loss(net, xp.view(), &c)?;
        xp[[r, col]] = original - FD_STEP;
        let minus = probe_loss(net, xp.view(), &c)?;
        xp[[r, col]] = original;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        input = input.max(rel_error(dx[[r, col]], numeric));
    }

    let max_rel_error = layers.iter().map(|e| e.weights.max(e.biases)).fold(input, f64::max);
    Ok(GradientReport { layers, input, max_rel_error, tolerance })
}
