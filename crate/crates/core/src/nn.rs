//! Minimal dense feed-forward networks.
//!
//! Every policy and value function in the crate is an [`Mlp`]: a chain of
//! affine layers, each followed by an element-wise activation (or a softmax
//! on the final layer). Backpropagation is exact, computed from a
//! [`ForwardTrace`] of the layer outputs, and returns both the parameter
//! gradient and the gradient with respect to the network input so that
//! networks can be chained (encoder → actor).
//!
//! Weights are stored row-major with shape `(outputs, inputs)`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(rename_all = "lowercase")
)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Softmax,
    /// Identity.
    #[cfg_attr(feature = "serde", serde(rename = "none"))]
    Linear,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Tanh => z.iter_mut().for_each(|v| *v = math::tanh(*v)),
            Activation::Sigmoid => z
                .iter_mut()
                .for_each(|v| *v = 1.0 / (1.0 + math::exp(-*v))),
            Activation::Softmax => softmax_in_place(z),
            Activation::Linear => {}
        }
    }

    /// Maps `dL/dy` to `dL/dz` in place, given the activation output `y`.
    fn backprop(self, y: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Relu => {
                for (g, &y) in grad.iter_mut().zip(y) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Tanh => {
                for (g, &y) in grad.iter_mut().zip(y) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Sigmoid => {
                for (g, &y) in grad.iter_mut().zip(y) {
                    *g *= y * (1.0 - y);
                }
            }
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(y).map(|(g, y)| g * y).sum();
                for (g, &y) in grad.iter_mut().zip(y) {
                    *g = y * (*g - dot);
                }
            }
            Activation::Linear => {}
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = math::exp(*v - max);
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// One dense layer: `y = activation(W x + b)`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Layer {
            inputs,
            outputs,
            activation,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn affine(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.biases.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            *zo += row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
        z
    }
}

/// Gradient (or any per-parameter quantity) with the layout of an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LayerGrad {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Gradient {
    pub layers: Vec<LayerGrad>,
}

impl Gradient {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradient {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    pub fn scale(&mut self, k: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v *= k);
            l.biases.iter_mut().for_each(|v| *v *= k);
        }
    }

    pub fn add_assign(&mut self, other: &Gradient) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(a, b)| *a += b);
            a.biases.iter_mut().zip(&b.biases).for_each(|(a, b)| *a += b);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|&v| v == 0.0))
    }

    fn congruent(&self, net: &Mlp) -> bool {
        self.layers.len() == net.layers.len()
            && self.layers.iter().zip(&net.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }
}

/// Adam moment accumulators; `m` and `v` share the parameter layout.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamState {
    pub step: u64,
    pub m: Gradient,
    pub v: Gradient,
}

/// Layer outputs recorded during a forward pass; `outputs[k]` is the output
/// of layer `k`, and `input` the network input.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub input: Vec<f64>,
    pub outputs: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.outputs.last().map(|v| v.as_slice()).unwrap_or(&self.input)
    }
}

/// A feed-forward network together with its optimizer state.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub adam: AdamState,
}

impl Mlp {
    /// All-zero network. `sizes` has one more entry than `activations`.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        check_topology(sizes, activations)?;
        let layers: Vec<Layer> = sizes
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| Layer::zeros(w[0], w[1], a))
            .collect();
        Ok(Self::from_layers(layers))
    }

    /// Weights uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero biases.
    pub fn new<R: rand::Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        for layer in &mut net.layers {
            let limit = 1.0 / math::sqrt(layer.inputs as f64);
            for w in &mut layer.weights {
                *w = rng.gen_range(-limit..=limit);
            }
        }
        Ok(net)
    }

    fn from_layers(layers: Vec<Layer>) -> Self {
        let mut net = Mlp {
            layers,
            adam: AdamState {
                step: 0,
                m: Gradient { layers: Vec::new() },
                v: Gradient { layers: Vec::new() },
            },
        };
        net.adam.m = Gradient::zeros_like(&net);
        net.adam.v = Gradient::zeros_like(&net);
        net
    }

    pub fn input_len(&self) -> usize {
        self.layers.first().map_or(0, |l| l.inputs)
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_len()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    /// Checks every structural invariant; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        check_topology(&self.layer_sizes(), &self.activations())?;
        for (k, pair) in self.layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Shape(format!(
                    "layer {k} emits {} values but layer {} expects {}",
                    pair[0].outputs,
                    k + 1,
                    pair[1].inputs
                )));
            }
        }
        for (k, l) in self.layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::Shape(format!(
                    "layer {k}: {}x{} needs {} weights and {} biases, found {} and {}",
                    l.outputs,
                    l.inputs,
                    l.inputs * l.outputs,
                    l.outputs,
                    l.weights.len(),
                    l.biases.len()
                )));
            }
        }
        if !self.adam.m.congruent(self) || !self.adam.v.congruent(self) {
            return Err(Error::Shape("adam moments do not match parameters".into()));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut z = layer.affine(&x);
            layer.activation.apply(&mut z);
            x = z;
        }
        Ok(x)
    }

    pub fn forward_trace(&self, input: &[f64]) -> Result<ForwardTrace> {
        self.check_input(input)?;
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let x = outputs.last().map(|v| v.as_slice()).unwrap_or(input);
            let mut z = layer.affine(x);
            layer.activation.apply(&mut z);
            outputs.push(z);
        }
        Ok(ForwardTrace {
            input: input.to_vec(),
            outputs,
        })
    }

    /// Gradient of `upstream · output` with respect to the parameters and the
    /// input. Forward activations are recomputed.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<(Gradient, Vec<f64>)> {
        let trace = self.forward_trace(input)?;
        let mut grad = Gradient::zeros_like(self);
        let dx = self.backward_trace(&trace, upstream, &mut grad)?;
        Ok((grad, dx))
    }

    /// Accumulates the parameter gradient into `grad` and returns the input
    /// gradient.
    pub fn backward_trace(
        &self,
        trace: &ForwardTrace,
        upstream: &[f64],
        grad: &mut Gradient,
    ) -> Result<Vec<f64>> {
        if upstream.len() != self.output_len() {
            return Err(Error::Dimension {
                what: "upstream gradient",
                layer: self.layers.len().saturating_sub(1),
                expected: self.output_len(),
                got: upstream.len(),
            });
        }
        if !grad.congruent(self) || trace.outputs.len() != self.layers.len() {
            return Err(Error::Shape("gradient/trace not congruent with network".into()));
        }
        let mut delta = upstream.to_vec();
        for k in (0..self.layers.len()).rev() {
            let layer = &self.layers[k];
            layer.activation.backprop(&trace.outputs[k], &mut delta);
            let x = if k == 0 {
                trace.input.as_slice()
            } else {
                trace.outputs[k - 1].as_slice()
            };
            let g = &mut grad.layers[k];
            let mut dx = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = o * layer.inputs;
                for i in 0..layer.inputs {
                    g.weights[row + i] += d * x[i];
                    dx[i] += layer.weights[row + i] * d;
                }
            }
            delta = dx;
        }
        Ok(delta)
    }

    /// One bias-corrected Adam update.
    pub fn adam_step(&mut self, grad: &Gradient, lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::InvalidParameter {
                name: "learning rate",
                reason: "must be finite and > 0",
            });
        }
        if !grad.congruent(self) {
            return Err(Error::Shape("gradient not congruent with network".into()));
        }
        for (k, g) in grad.layers.iter().enumerate() {
            if g.weights.iter().chain(&g.biases).any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteGradient { layer: k });
            }
        }
        self.adam.step += 1;
        let t = self.adam.step as i32;
        let c1 = 1.0 - math::powi(ADAM_BETA1, t);
        let c2 = 1.0 - math::powi(ADAM_BETA2, t);
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let g = &grad.layers[k];
            let m = &mut self.adam.m.layers[k];
            let v = &mut self.adam.v.layers[k];
            adam_update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, lr, c1, c2);
            adam_update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases, lr, c1, c2);
        }
        Ok(())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_len() {
            return Err(Error::Dimension {
                what: "input",
                layer: 0,
                expected: self.input_len(),
                got: input.len(),
            });
        }
        Ok(())
    }
}

fn adam_update(
    params: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    c1: f64,
    c2: f64,
) {
    for i in 0..params.len() {
        let g = grad[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        params[i] -= lr * m_hat / (math::sqrt(v_hat) + ADAM_EPS);
    }
}

fn check_topology(sizes: &[usize], activations: &[Activation]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Shape("need at least one layer".into()));
    }
    if activations.len() != sizes.len() - 1 {
        return Err(Error::Shape(format!(
            "{} layer sizes need {} activations, got {}",
            sizes.len(),
            sizes.len() - 1,
            activations.len()
        )));
    }
    if let Some(k) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Shape(format!("layer size {k} is zero")));
    }
    if let Some(k) = activations[..activations.len() - 1]
        .iter()
        .position(|&a| a == Activation::Softmax)
    {
        return Err(Error::Shape(format!(
            "softmax is only allowed on the final layer (found on layer {k})"
        )));
    }
    Ok(())
}

/// Draws an index with probability `probs[i]`.
pub fn categorical_sample<R: rand::Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Result<usize> {
    check_distribution(probs)?;
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the cumulative sum.
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(0))
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn categorical_entropy(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * math::ln(p))
        .sum::<f64>()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn check_distribution(probs: &[f64]) -> Result<()> {
    if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidDistribution);
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidDistribution);
    }
    Ok(())
}
