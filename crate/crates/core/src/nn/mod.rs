//! Fixed-topology feed-forward networks with analytic gradients.
//!
//! Batches are stored `(examples, features)`. Hidden layers use one shared
//! activation; the output layer is linear.

mod adam;
mod io;

pub use adam::Adam;
pub use io::{read_mlp, write_mlp};

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },
    #[error("bad parameter file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }

    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|x| x.max(0.0)),
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the activation output.
    fn backprop(self, grad: &mut Array2<f64>, out: &Array2<f64>) {
        match self {
            Activation::Tanh => Zip::from(grad).and(out).for_each(|g, &h| *g *= 1.0 - h * h),
            Activation::Relu => Zip::from(grad).and(out).for_each(|g, &h| {
                if h <= 0.0 {
                    *g = 0.0
                }
            }),
        }
    }
}

/// Gains for orthogonal initialisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Init {
    pub hidden_gain: f64,
    pub output_gain: f64,
}

impl Init {
    pub const CRITIC: Init = Init {
        hidden_gain: std::f64::consts::SQRT_2,
        output_gain: 1.0,
    };
    /// Near-zero output so a fresh policy is close to its base distribution.
    pub const ACTOR: Init = Init {
        hidden_gain: std::f64::consts::SQRT_2,
        output_gain: 0.01,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    /// `(n_in, n_out)`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Dense {
            weights: Array2::zeros((n_in, n_out)),
            bias: Array1::zeros(n_out),
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

fn orthogonal(n_in: usize, n_out: usize, gain: f64, rng: &mut impl Rng) -> Array2<f64> {
    let (rows, cols) = (n_in.max(n_out), n_in.min(n_out));
    let g = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Array2::from_shape_fn((n_in, n_out), |(i, o)| {
        let v = if n_in >= n_out { q[(i, o)] } else { q[(o, i)] };
        gain * v
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    activation: Activation,
}

/// Layer inputs recorded during a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `inputs[l]` is what layer `l` consumed; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    pub output: Array2<f64>,
}

/// Per-parameter gradient plus the gradient with respect to the input batch.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    pub layers: Vec<Dense>,
    pub input: Array2<f64>,
}

impl GradientBuffer {
    pub fn zeros_like(net: &Mlp) -> Self {
        GradientBuffer {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weights.nrows(), l.weights.ncols()))
                .collect(),
            input: Array2::zeros((0, net.input_dim())),
        }
    }

    /// Adds another buffer's parameter gradients (input gradients are not accumulated).
    pub fn accumulate(&mut self, other: &GradientBuffer) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights += &b.weights;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights *= k;
            l.bias *= k;
        }
    }

    pub fn zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.bias.fill(0.0);
        }
        self.input.fill(0.0);
    }

    /// Parameter gradients in the same order as [`Mlp::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }
}

impl Mlp {
    /// Zero-initialised network with layer widths `sizes` (input first).
    pub fn zeros(sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least input and output sizes");
        Mlp {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            activation,
        }
    }

    /// Orthogonal weights scaled by the init gains, zero biases.
    pub fn new(sizes: &[usize], activation: Activation, init: Init, rng: &mut impl Rng) -> Self {
        let mut net = Mlp::zeros(sizes, activation);
        let last = net.layers.len() - 1;
        for (i, layer) in net.layers.iter_mut().enumerate() {
            let gain = if i == last { init.output_gain } else { init.hidden_gain };
            let (n_in, n_out) = layer.weights.dim();
            layer.weights = orthogonal(n_in, n_out, gain, rng);
        }
        net
    }

    pub fn from_layers(layers: Vec<Dense>, activation: Activation) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Shape {
                expected: "at least one layer".into(),
                got: "none".into(),
            });
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.ncols() {
                return Err(NnError::Shape {
                    expected: format!("layer {i} bias of length {}", l.weights.ncols()),
                    got: l.bias.len().to_string(),
                });
            }
        }
        for w in layers.windows(2) {
            if w[0].weights.ncols() != w[1].weights.nrows() {
                return Err(NnError::Shape {
                    expected: format!("{} inputs", w[0].weights.ncols()),
                    got: w[1].weights.nrows().to_string(),
                });
            }
        }
        Ok(Mlp { layers, activation })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim()];
        s.extend(self.layers.iter().map(|l| l.weights.ncols()));
        s
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weights.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn check_input(&self, cols: usize) -> Result<(), NnError> {
        if cols != self.input_dim() {
            return Err(NnError::Shape {
                expected: format!("{} input features", self.input_dim()),
                got: cols.to_string(),
            });
        }
        Ok(())
    }

    /// Forward pass for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(input.len())?;
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_batch(&self, input: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if i != last {
                self.activation.apply(&mut z);
            }
            h = z;
        }
        Ok(h)
    }

    /// Forward pass that keeps what [`Mlp::backward_cached`] needs.
    pub fn forward_cached(&self, input: ArrayView2<f64>) -> Result<ForwardCache, NnError> {
        self.check_input(input.ncols())?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = input.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.weights);
            z += &layer.bias;
            if i != last {
                self.activation.apply(&mut z);
            }
            inputs.push(std::mem::replace(&mut h, z));
        }
        Ok(ForwardCache { inputs, output: h })
    }

    /// Gradient of `Σ ⟨output, output_grad⟩` over the batch, with respect to every
    /// parameter and to the input.
    pub fn backward_cached(
        &self,
        cache: &ForwardCache,
        output_grad: ArrayView2<f64>,
    ) -> Result<GradientBuffer, NnError> {
        if output_grad.dim() != cache.output.dim() {
            return Err(NnError::Shape {
                expected: format!("output gradient {:?}", cache.output.dim()),
                got: format!("{:?}", output_grad.dim()),
            });
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = output_grad.to_owned();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let a = &cache.inputs[l];
            grads.push(Dense {
                weights: a.t().dot(&delta),
                bias: delta.sum_axis(Axis(0)),
            });
            let mut upstream = delta.dot(&layer.weights.t());
            if l > 0 {
                self.activation.backprop(&mut upstream, a);
            }
            delta = upstream;
        }
        grads.reverse();
        Ok(GradientBuffer {
            layers: grads,
            input: delta,
        })
    }

    /// Convenience: forward then backward on the same input.
    pub fn backward(
        &self,
        input: ArrayView2<f64>,
        output_grad: ArrayView2<f64>,
    ) -> Result<GradientBuffer, NnError> {
        let cache = self.forward_cached(input)?;
        self.backward_cached(&cache, output_grad)
    }

    /// Parameters layer by layer: weights row-major, then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::Shape {
                expected: format!("{} parameters", self.param_count()),
                got: params.len().to_string(),
            });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut() {
                *w = it.next().expect("length checked");
            }
            for b in l.bias.iter_mut() {
                *b = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// `self ← polyak · self + (1 - polyak) · source`.
    pub fn soft_update_from(&mut self, source: &Mlp, polyak: f64) {
        for (t, s) in self.layers.iter_mut().zip(&source.layers) {
            Zip::from(&mut t.weights)
                .and(&s.weights)
                .for_each(|t, &s| *t = polyak * *t + (1.0 - polyak) * s);
            Zip::from(&mut t.bias)
                .and(&s.bias)
                .for_each(|t, &s| *t = polyak * *t + (1.0 - polyak) * s);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|x| x.is_finite()))
    }
}
