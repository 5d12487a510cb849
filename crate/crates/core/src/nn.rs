//! Minimal dense feed-forward kernel with manual backpropagation and Adam.
//!
//! Supports the model family used throughout the crate: stacks of dense
//! layers with identity or rectifier activations, topped by a softmax head
//! (distribution over actions or experts) or an element-wise logistic head
//! (independent per-output probabilities; with one output this is the scalar
//! routing probability).
//!
//! Parameters are enumerable in a fixed order — layer by layer, weights
//! row-major then biases — which is what the finite-difference checker and
//! the serialization format rely on.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-layer activation applied to the affine output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Identity => z,
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the post-activation value.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Output head turning final-layer values into probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Softmax over the output dimension; entries are positive and sum to 1.
    Softmax,
    /// Element-wise sigmoid; entries are independent probabilities.
    Logistic,
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    in_dim: usize,
    out_dim: usize,
    /// Row-major `(out_dim, in_dim)`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl Layer {
    fn forward_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let mut z = self.bias[o];
            for (w, x) in row.iter().zip(input) {
                z += w * x;
            }
            out.push(self.activation.apply(z));
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// Dense feed-forward network: `input -> layers -> head`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    input_dim: usize,
    layers: Vec<Layer>,
    head: Head,
}

/// Cached activations from a forward pass, consumed by [`DenseNet::backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Post-activation output of each layer.
    layer_outputs: Vec<Vec<f64>>,
    /// Head output (probabilities).
    head_output: Vec<f64>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        &self.head_output
    }
}

/// Per-parameter partials in the network's fixed parameter order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    values: Vec<f64>,
}

impl Gradient {
    pub fn zeros(net: &DenseNet) -> Self {
        Gradient {
            values: vec![0.0; net.param_count()],
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn scale(&mut self, factor: f64) {
        for v in &mut self.values {
            *v *= factor;
        }
    }

    pub fn add(&mut self, other: &Gradient) {
        assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl DenseNet {
    /// Build a network with the given hidden layer specs and an output layer
    /// of `output_dim` (identity activation) feeding `head`.
    ///
    /// Weights are initialized uniformly in
    /// `±sqrt(6 / (fan_in + fan_out))`, biases at zero.
    pub fn new<R: Rng>(
        input_dim: usize,
        hidden: &[(usize, Activation)],
        output_dim: usize,
        head: Head,
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument(
                "network dimensions must be positive".into(),
            ));
        }
        if hidden.iter().any(|(w, _)| *w == 0) {
            return Err(Error::InvalidArgument(
                "hidden widths must be positive".into(),
            ));
        }
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut in_dim = input_dim;
        for &(width, activation) in hidden {
            layers.push(Self::init_layer(in_dim, width, activation, rng));
            in_dim = width;
        }
        layers.push(Self::init_layer(in_dim, output_dim, Activation::Identity, rng));
        Ok(DenseNet {
            input_dim,
            layers,
            head,
        })
    }

    fn init_layer<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Layer {
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weights = (0..in_dim * out_dim)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Layer {
            in_dim,
            out_dim,
            weights,
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// Decoupled weight decay: `w -= rate * w` on weight matrices only;
    /// biases are left alone so constant predictors stay representable.
    pub fn apply_weight_decay(&mut self, rate: f64) {
        for layer in &mut self.layers {
            for w in &mut layer.weights {
                *w -= rate * *w;
            }
        }
    }

    /// Network with all parameters at zero; handy as a neutral fixture
    /// (softmax output is uniform, logistic output is 0.5).
    pub fn zeros(
        input_dim: usize,
        hidden: &[(usize, Activation)],
        output_dim: usize,
        head: Head,
    ) -> Result<Self> {
        let mut rng = crate::seeds::rng(0, crate::seeds::Role::PolicyInit, 0);
        let mut net = Self::new(input_dim, hidden, output_dim, head, &mut rng)?;
        let n = net.param_count();
        net.set_params_flat(&vec![0.0; n])?;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out_dim
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Flat parameter vector in the fixed order.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in &self.layers {
            out.extend_from_slice(&layer.weights);
            out.extend_from_slice(&layer.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::InputShape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut offset = 0;
        for layer in &mut self.layers {
            let w = layer.weights.len();
            layer.weights.copy_from_slice(&params[offset..offset + w]);
            offset += w;
            let b = layer.bias.len();
            layer.bias.copy_from_slice(&params[offset..offset + b]);
            offset += b;
        }
        Ok(())
    }

    /// Head output for `x`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_trace(x)?.head_output)
    }

    /// Forward pass retaining per-layer activations for [`DenseNet::backward`].
    pub fn forward_trace(&self, x: &[f64]) -> Result<ForwardTrace> {
        if x.len() != self.input_dim {
            return Err(Error::InputShape(format!(
                "input has dimension {}, network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        let mut layer_outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        let mut current = x;
        for layer in &self.layers {
            let mut out = Vec::new();
            layer.forward_into(current, &mut out);
            layer_outputs.push(out);
            current = layer_outputs.last().expect("just pushed");
        }
        let head_output = self.apply_head(current);
        Ok(ForwardTrace {
            layer_outputs,
            head_output,
        })
    }

    fn apply_head(&self, z: &[f64]) -> Vec<f64> {
        match self.head {
            Head::Softmax => {
                // Max-subtraction keeps exp() in range for large logits.
                let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                exps.into_iter().map(|e| e / sum).collect()
            }
            Head::Logistic => z.iter().map(|v| sigmoid(*v)).collect(),
        }
    }

    /// Exact gradient of a scalar objective whose partials with respect to the
    /// head output are `upstream`, for the forward pass recorded in `trace`.
    ///
    /// The contribution is *accumulated* into `grad`, scaled by `scale`;
    /// this is the shape minibatch objectives need.
    pub fn backward_into(
        &self,
        x: &[f64],
        trace: &ForwardTrace,
        upstream: &[f64],
        scale: f64,
        grad: &mut Gradient,
    ) -> Result<()> {
        if upstream.len() != self.output_dim() {
            return Err(Error::InputShape(format!(
                "upstream has dimension {}, network outputs {}",
                upstream.len(),
                self.output_dim()
            )));
        }
        if trace.layer_outputs.len() != self.layers.len() {
            return Err(Error::InputShape(
                "trace does not match network layer count".into(),
            ));
        }
        if grad.values.len() != self.param_count() {
            return Err(Error::InputShape("gradient shape mismatch".into()));
        }

        // Head jacobian: d objective / d (final pre-head values).
        let p = &trace.head_output;
        let delta: Vec<f64> = match self.head {
            Head::Softmax => {
                let dot: f64 = upstream.iter().zip(p).map(|(u, pi)| u * pi).sum();
                upstream
                    .iter()
                    .zip(p)
                    .map(|(u, pi)| pi * (u - dot))
                    .collect()
            }
            Head::Logistic => upstream
                .iter()
                .zip(p)
                .map(|(u, pi)| u * pi * (1.0 - pi))
                .collect(),
        };
        self.backprop_layers(x, trace, delta, scale, grad)
    }

    /// Shared layer-by-layer backprop; `delta` is d objective / d (final
    /// pre-head values).
    fn backprop_layers(
        &self,
        x: &[f64],
        trace: &ForwardTrace,
        mut delta: Vec<f64>,
        scale: f64,
        grad: &mut Gradient,
    ) -> Result<()> {
        if delta.len() != self.output_dim() {
            return Err(Error::InputShape(format!(
                "upstream has dimension {}, network outputs {}",
                delta.len(),
                self.output_dim()
            )));
        }
        if trace.layer_outputs.len() != self.layers.len() {
            return Err(Error::InputShape(
                "trace does not match network layer count".into(),
            ));
        }
        if grad.values.len() != self.param_count() {
            return Err(Error::InputShape("gradient shape mismatch".into()));
        }
        // Parameter offsets per layer, so we can write directly into the flat
        // gradient while walking backwards.
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut acc = 0;
        for layer in &self.layers {
            offsets.push(acc);
            acc += layer.param_count();
        }

        for idx in (0..self.layers.len()).rev() {
            let layer = &self.layers[idx];
            let layer_out = &trace.layer_outputs[idx];
            // Chain through the layer activation.
            for (d, y) in delta.iter_mut().zip(layer_out) {
                *d *= layer.activation.grad_from_output(*y);
            }
            let layer_in: &[f64] = if idx == 0 {
                x
            } else {
                &trace.layer_outputs[idx - 1]
            };
            let base = offsets[idx];
            for o in 0..layer.out_dim {
                let d = delta[o] * scale;
                let wrow = base + o * layer.in_dim;
                for (j, xin) in layer_in.iter().enumerate() {
                    grad.values[wrow + j] += d * xin;
                }
                grad.values[base + layer.weights.len() + o] += d;
            }
            if idx > 0 {
                let mut next = vec![0.0; layer.in_dim];
                for o in 0..layer.out_dim {
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let d = delta[o];
                    for (n, w) in next.iter_mut().zip(row) {
                        *n += d * w;
                    }
                }
                delta = next;
            }
        }
        Ok(())
    }

    /// Convenience wrapper allocating a fresh gradient.
    pub fn backward(&self, x: &[f64], trace: &ForwardTrace, upstream: &[f64]) -> Result<Gradient> {
        let mut grad = Gradient::zeros(self);
        self.backward_into(x, trace, upstream, 1.0, &mut grad)?;
        Ok(grad)
    }

    /// Backward pass whose `upstream` is taken with respect to the final
    /// pre-head values rather than the head output.
    ///
    /// Cross-entropy and logistic losses compose with their heads to the
    /// bounded logit gradient `p - y`; feeding that here avoids the
    /// overflow-prone division by saturated probabilities.
    pub fn backward_from_logits_into(
        &self,
        x: &[f64],
        trace: &ForwardTrace,
        upstream: &[f64],
        scale: f64,
        grad: &mut Gradient,
    ) -> Result<()> {
        self.backprop_layers(x, trace, upstream.to_vec(), scale, grad)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Adam hyperparameters. The learning rate defaults to 0.001; decay rates and
/// epsilon are the conventional 0.9 / 0.999 / 1e-8.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second-moment accumulators plus step counter for one network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(net: &DenseNet, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; net.param_count()],
            v: vec![0.0; net.param_count()],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One Adam descent step on `g` with bias correction, in place.
///
/// The update *descends* along `g`; maximizing callers pass the negated
/// objective gradient.
pub fn adam_step(net: &mut DenseNet, state: &mut AdamState, g: &Gradient) -> Result<()> {
    if g.values.len() != net.param_count() {
        return Err(Error::InputShape("gradient shape mismatch".into()));
    }
    if !g.is_finite() {
        return Err(Error::Numeric("non-finite gradient entries".into()));
    }
    state.step += 1;
    let c = state.config;
    let bc1 = 1.0 - c.beta1.powi(state.step as i32);
    let bc2 = 1.0 - c.beta2.powi(state.step as i32);
    let mut params = net.params_flat();
    for i in 0..params.len() {
        let gi = g.values[i];
        state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * gi;
        state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * gi * gi;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
    }
    net.set_params_flat(&params)
}

/// Max relative error between the analytic gradient of `objective` and a
/// central finite difference (step 1e-5), over all parameters.
///
/// `objective` returns the scalar value and its analytic gradient; only the
/// value is consulted at perturbed parameters.
pub fn finite_diff_check<F>(net: &DenseNet, objective: F) -> f64
where
    F: Fn(&DenseNet) -> (f64, Gradient),
{
    const STEP: f64 = 1e-5;
    let (_, analytic) = objective(net);
    let base = net.params_flat();
    let mut probe = net.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut params = base.clone();
        params[i] = base[i] + STEP;
        probe.set_params_flat(&params).expect("same shape");
        let plus = objective(&probe).0;
        params[i] = base[i] - STEP;
        probe.set_params_flat(&params).expect("same shape");
        let minus = objective(&probe).0;
        let numeric = (plus - minus) / (2.0 * STEP);
        let err = (analytic.values[i] - numeric).abs() / (numeric.abs() + 1e-8);
        worst = worst.max(err);
    }
    worst
}

// ── Serialization ─────────────────────────────────────────────────────
//
// Versioned JSON: shape header plus the flat parameter array in the fixed
// parameter order. Exact layout documented in the repository README.

pub const DENSENET_FORMAT: &str = "handoff.densenet.v1";

#[derive(Debug, Serialize, Deserialize)]
struct LayerIo {
    out_dim: usize,
    activation: Activation,
}

#[derive(Debug, Serialize, Deserialize)]
struct DenseNetIo {
    format: String,
    input_dim: usize,
    head: Head,
    layers: Vec<LayerIo>,
    params: Vec<f64>,
}

impl Serialize for DenseNet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DenseNetIo {
            format: DENSENET_FORMAT.to_string(),
            input_dim: self.input_dim,
            head: self.head,
            layers: self
                .layers
                .iter()
                .map(|l| LayerIo {
                    out_dim: l.out_dim,
                    activation: l.activation,
                })
                .collect(),
            params: self.params_flat(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for DenseNet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as DeError;
        let io = DenseNetIo::deserialize(deserializer)?;
        if io.format != DENSENET_FORMAT {
            return Err(D::Error::custom(format!(
                "unsupported network format {:?}",
                io.format
            )));
        }
        if io.layers.is_empty() {
            return Err(D::Error::custom("network must have at least one layer"));
        }
        let mut layers = Vec::with_capacity(io.layers.len());
        let mut in_dim = io.input_dim;
        for spec in &io.layers {
            layers.push(Layer {
                in_dim,
                out_dim: spec.out_dim,
                weights: vec![0.0; in_dim * spec.out_dim],
                bias: vec![0.0; spec.out_dim],
                activation: spec.activation,
            });
            in_dim = spec.out_dim;
        }
        let mut net = DenseNet {
            input_dim: io.input_dim,
            layers,
            head: io.head,
        };
        net.set_params_flat(&io.params)
            .map_err(|e| D::Error::custom(e.to_string()))?;
        Ok(net)
    }
}
