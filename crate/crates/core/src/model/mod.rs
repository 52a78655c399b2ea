//! The multilayer perceptron shared by every federated algorithm and baseline:
//! three fully-connected layers, ReLU plus inverted dropout after each hidden
//! layer, and a single sigmoid output trained with binary cross-entropy.

mod matrix;
mod network;

pub use matrix::Matrix;
pub use network::{
    backward, bce_loss, evaluate, evaluate_full, forward, predict, Evaluation, ForwardCache, Mode, BCE_CLAMP,
};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Layer widths and dropout rates of the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    /// `(input_dim, h1, h2, 1)`.
    pub layer_dims: Vec<usize>,
    /// One rate per hidden layer.
    pub dropout_rates: Vec<f64>,
}

impl MlpArchitecture {
    pub const HIDDEN: (usize, usize) = (64, 32);
    pub const DROPOUT: f64 = 0.2;

    pub fn new(layer_dims: Vec<usize>, dropout_rates: Vec<f64>) -> Result<Self> {
        let arch = Self {
            layer_dims,
            dropout_rates,
        };
        arch.validate()?;
        Ok(arch)
    }

    /// The benchmark network for a given input width: hidden (64, 32), dropout 0.2.
    pub fn standard(input_dim: usize) -> Self {
        Self {
            layer_dims: vec![input_dim, Self::HIDDEN.0, Self::HIDDEN.1, 1],
            dropout_rates: vec![Self::DROPOUT; 2],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() != 4 {
            return Err(Error::InvalidArgument(format!(
                "expected 4 layer dims (3 weight layers), got {}",
                self.layer_dims.len()
            )));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::InvalidArgument("layer dims must be positive".into()));
        }
        if self.layer_dims[3] != 1 {
            return Err(Error::InvalidArgument(
                "output layer must have a single unit".into(),
            ));
        }
        if self.dropout_rates.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "expected 2 dropout rates, got {}",
                self.dropout_rates.len()
            )));
        }
        if self
            .dropout_rates
            .iter()
            .any(|r| !(0.0..1.0).contains(r) || r.is_nan())
        {
            return Err(Error::InvalidArgument(
                "dropout rates must lie in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// Weights and biases of every layer, stored contiguously in flatten order:
/// for each layer, the `[out × in]` weight matrix row-major, then the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    dims: Vec<usize>,
    values: Vec<f64>,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

/// Borrowed view of one layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerView<'a> {
    pub rows: usize,
    pub cols: usize,
    pub weights: &'a [f64],
    pub bias: &'a [f64],
}

impl<'a> LayerView<'a> {
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.cols + inp]
    }
}

impl ModelParams {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            dims: dims.to_vec(),
            values: vec![0.0; n],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims)
    }

    /// Build from per-layer `(weights [out×in] row-major, bias [out])`.
    pub fn from_layers(layers: &[(Vec<f64>, Vec<f64>)], input_dim: usize) -> Result<Self> {
        let mut dims = vec![input_dim];
        let mut values = Vec::new();
        for (k, (w, b)) in layers.iter().enumerate() {
            let cols = *dims.last().unwrap();
            if b.is_empty() || w.len() != b.len() * cols {
                return Err(Error::Dimension(format!(
                    "layer {k}: weights len {} incompatible with bias len {} and input {cols}",
                    w.len(),
                    b.len()
                )));
            }
            dims.push(b.len());
            values.extend_from_slice(w);
            values.extend_from_slice(b);
        }
        Ok(Self { dims, values })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    fn layer_offset(&self, k: usize) -> usize {
        self.dims[..=k]
            .windows(2)
            .take(k)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layer(&self, k: usize) -> LayerView<'_> {
        let (cols, rows) = (self.dims[k], self.dims[k + 1]);
        let off = self.layer_offset(k);
        let w_end = off + rows * cols;
        LayerView {
            rows,
            cols,
            weights: &self.values[off..w_end],
            bias: &self.values[w_end..w_end + rows],
        }
    }

    pub(crate) fn layer_mut(&mut self, k: usize) -> (&mut [f64], &mut [f64]) {
        let (cols, rows) = (self.dims[k], self.dims[k + 1]);
        let off = self.layer_offset(k);
        let (w, rest) = self.values[off..].split_at_mut(rows * cols);
        (w, &mut rest[..rows])
    }

    pub fn layers(&self) -> impl Iterator<Item = LayerView<'_>> {
        (0..self.num_layers()).map(move |k| self.layer(k))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Layer-major, row-major flattening.
    pub fn flatten(&self) -> Vec<f64> {
        self.values.clone()
    }

    pub fn unflatten(values: Vec<f64>, arch: &MlpArchitecture) -> Result<Self> {
        Self::unflatten_dims(values, &arch.layer_dims)
    }

    pub fn unflatten_dims(values: Vec<f64>, dims: &[usize]) -> Result<Self> {
        let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if values.len() != expected {
            return Err(Error::Dimension(format!(
                "flattened length {} does not match architecture ({expected})",
                values.len()
            )));
        }
        Ok(Self {
            dims: dims.to_vec(),
            values,
        })
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.dims == other.dims
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        // FNV-1a over the bit patterns.
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.dims.iter().map(|&d| d as u64).chain(self.values.iter().map(|v| v.to_bits())) {
            h ^= v;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        h
    }
}

/// Glorot-uniform weights, zero biases.
pub fn init_params(arch: &MlpArchitecture, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let mut rng = seed::rng(seed);
    let mut params = ModelParams::zeros(&arch.layer_dims);
    for k in 0..params.num_layers() {
        let (fan_in, fan_out) = (arch.layer_dims[k], arch.layer_dims[k + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let (w, _) = params.layer_mut(k);
        for v in w.iter_mut() {
            *v = rng.random_range(-limit..limit);
        }
    }
    Ok(params)
}

/// `params − eta·grads`.
pub fn sgd_step(params: &ModelParams, grads: &Gradients, eta: f64) -> Result<ModelParams> {
    if !params.same_shape(grads) {
        return Err(Error::Dimension("gradient shape differs from params".into()));
    }
    let mut out = params.clone();
    for (p, g) in out.values.iter_mut().zip(&grads.values) {
        *p -= eta * g;
    }
    Ok(out)
}
