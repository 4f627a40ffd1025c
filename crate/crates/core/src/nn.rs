//! The taste network: a dense feed-forward map from characteristics to
//! taste coefficients, with per-output sign-constraining transforms.
//!
//! Layer weights are row-major `(out_dim, in_dim)`. A spec with no hidden
//! layers is a single affine map.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative given the pre-activation `x` and output `y`.
    /// The rectifier's derivative at exactly 0 is 0.
    #[inline]
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Final transform applied to one network output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputTransform {
    Identity,
    /// `-relu(-x)`; output ≤ 0.
    NonPositiveRelu,
    /// `-exp(-x)`; output < 0.
    NegativeExp,
    /// `relu(x)`; output ≥ 0.
    NonNegativeRelu,
    /// `exp(x)`; output > 0.
    Exp,
}

impl OutputTransform {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            OutputTransform::Identity => x,
            OutputTransform::NonPositiveRelu => x.min(0.0),
            OutputTransform::NegativeExp => -(-x).exp(),
            OutputTransform::NonNegativeRelu => x.max(0.0),
            OutputTransform::Exp => x.exp(),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            OutputTransform::Identity => 1.0,
            OutputTransform::NonPositiveRelu => {
                if x < 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            OutputTransform::NegativeExp => (-x).exp(),
            OutputTransform::NonNegativeRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            OutputTransform::Exp => x.exp(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub hidden_sizes: Vec<usize>,
    pub hidden_activations: Vec<Activation>,
    pub output_transforms: Vec<OutputTransform>,
}

impl MlpSpec {
    /// Same activation on every hidden layer.
    pub fn new(hidden_sizes: Vec<usize>, activation: Activation, output_transforms: Vec<OutputTransform>) -> Self {
        let hidden_activations = vec![activation; hidden_sizes.len()];
        Self {
            hidden_sizes,
            hidden_activations,
            output_transforms,
        }
    }

    /// No hidden layer: outputs are affine in the inputs.
    pub fn linear(output_transforms: Vec<OutputTransform>) -> Self {
        Self::new(Vec::new(), Activation::Relu, output_transforms)
    }

    pub fn n_outputs(&self) -> usize {
        self.output_transforms.len()
    }

    pub fn n_hidden_layers(&self) -> usize {
        self.hidden_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_activations.len() != self.hidden_sizes.len() {
            return Err(Error::Shape(format!(
                "{} hidden layers but {} activations",
                self.hidden_sizes.len(),
                self.hidden_activations.len()
            )));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Shape("hidden layer sizes must be positive".into()));
        }
        if self.output_transforms.is_empty() {
            return Err(Error::Shape("network needs at least one output".into()));
        }
        Ok(())
    }

    fn dims(&self, input_dim: usize) -> Vec<usize> {
        let mut d = Vec::with_capacity(self.hidden_sizes.len() + 2);
        d.push(input_dim);
        d.extend(&self.hidden_sizes);
        d.push(self.n_outputs());
        d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major, `out_dim * in_dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    #[inline]
    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.in_dim + inp]
    }

    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.out_dim {
            let row = &self.weights[o * self.in_dim..(o + 1) * self.in_dim];
            let s: f64 = row.iter().zip(input).map(|(w, x)| w * x).sum();
            out.push(s + self.bias[o]);
        }
    }
}

/// Weights and biases of every layer, input to output.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

impl MlpParams {
    pub fn zeros(spec: &MlpSpec, input_dim: usize) -> Self {
        let dims = spec.dims(input_dim);
        Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer::zeros(l.in_dim, l.out_dim))
                .collect(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters in a fixed order: per layer, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &MlpParams, scale: f64) {
        for (a, b) in self.values_mut().zip(other.values()) {
            *a += scale * b;
        }
    }

    pub fn check(&self, spec: &MlpSpec) -> Result<()> {
        spec.validate()?;
        let dims = spec.dims(self.input_dim());
        if self.layers.len() != dims.len() - 1 {
            return Err(Error::Shape(format!(
                "spec has {} layers, params have {}",
                dims.len() - 1,
                self.layers.len()
            )));
        }
        for (i, (l, w)) in self.layers.iter().zip(dims.windows(2)).enumerate() {
            if l.in_dim != w[0]
                || l.out_dim != w[1]
                || l.weights.len() != w[0] * w[1]
                || l.bias.len() != w[1]
            {
                return Err(Error::Shape(format!(
                    "layer {i}: expected {}x{}, found {}x{}",
                    w[1], w[0], l.out_dim, l.in_dim
                )));
            }
        }
        Ok(())
    }
}

/// Glorot-uniform weights `U(±sqrt(6 / (fan_in + fan_out)))`, zero biases.
pub fn init_params(spec: &MlpSpec, input_dim: usize, seed: u64) -> Result<MlpParams> {
    if input_dim == 0 {
        return Err(Error::Argument("network input dimension must be at least 1".into()));
    }
    spec.validate()?;
    let mut rng = rng::stream(seed, rng::streams::INIT);
    let mut params = MlpParams::zeros(spec, input_dim);
    for layer in &mut params.layers {
        let bound = (6.0 / (layer.in_dim + layer.out_dim) as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(params)
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ForwardCache {
    /// `activations[0]` is the input; `activations[l]` the output of hidden layer `l`.
    pub activations: Vec<Vec<f64>>,
    /// Pre-activation of every layer; the last entry is the raw output.
    pub pre: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn raw_output(&self) -> &[f64] {
        self.pre.last().map_or(&[], Vec::as_slice)
    }

    /// Post-activation values of hidden layer `layer` (0-based).
    pub fn hidden(&self, layer: usize) -> &[f64] {
        &self.activations[layer + 1]
    }
}

/// Evaluates the network on one input.
pub fn forward(params: &MlpParams, spec: &MlpSpec, z: &[f64]) -> (Vec<f64>, ForwardCache) {
    let mut cache = ForwardCache::default();
    let beta = forward_into(params, spec, z, &mut cache);
    (beta, cache)
}

/// Like [`forward`], reusing the buffers of `cache`.
pub fn forward_into(params: &MlpParams, spec: &MlpSpec, z: &[f64], cache: &mut ForwardCache) -> Vec<f64> {
    debug_assert_eq!(z.len(), params.input_dim());
    let n_layers = params.layers.len();
    cache.activations.resize_with(n_layers, Vec::new);
    cache.pre.resize_with(n_layers, Vec::new);
    cache.activations[0].clear();
    cache.activations[0].extend_from_slice(z);

    for (l, layer) in params.layers.iter().enumerate() {
        let (head, tail) = cache.pre.split_at_mut(l);
        let _ = head;
        layer.affine(&cache.activations[l], &mut tail[0]);
        if l + 1 < n_layers {
            let act = spec.hidden_activations[l];
            let next = &mut cache.activations[l + 1];
            next.clear();
            next.extend(cache.pre[l].iter().map(|&x| act.apply(x)));
        }
    }
    cache.pre[n_layers - 1]
        .iter()
        .zip(&spec.output_transforms)
        .map(|(&x, t)| t.apply(x))
        .collect()
}

/// Backpropagates `upstream = dL/dβ` through the network.
///
/// Returns parameter gradients shaped like `params` and the gradient with
/// respect to the input.
pub fn backward(
    params: &MlpParams,
    spec: &MlpSpec,
    cache: &ForwardCache,
    upstream: &[f64],
) -> Result<(MlpParams, Vec<f64>)> {
    let mut grads = params.zeros_like();
    let input_grad = backward_accumulate(params, spec, cache, upstream, &mut grads)?;
    Ok((grads, input_grad))
}

/// Backward pass that adds into an existing gradient buffer.
pub fn backward_accumulate(
    params: &MlpParams,
    spec: &MlpSpec,
    cache: &ForwardCache,
    upstream: &[f64],
    grads: &mut MlpParams,
) -> Result<Vec<f64>> {
    let n_layers = params.layers.len();
    if upstream.len() != spec.n_outputs()
        || cache.pre.len() != n_layers
        || cache.activations.len() != n_layers
        || grads.layers.len() != n_layers
    {
        return Err(Error::Shape(
            "backward called with a cache or gradient that does not match the network".into(),
        ));
    }

    let mut delta: Vec<f64> = cache.pre[n_layers - 1]
        .iter()
        .zip(&spec.output_transforms)
        .zip(upstream)
        .map(|((&x, t), g)| g * t.derivative(x))
        .collect();

    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let input = &cache.activations[l];
        let g = &mut grads.layers[l];
        for o in 0..layer.out_dim {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            g.bias[o] += d;
            let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (gw, x) in row.iter_mut().zip(input) {
                *gw += d * x;
            }
        }
        let mut prev = vec![0.0; layer.in_dim];
        for o in 0..layer.out_dim {
            let d = delta[o];
            if d == 0.0 {
                continue;
            }
            let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
            for (p, w) in prev.iter_mut().zip(row) {
                *p += d * w;
            }
        }
        if l > 0 {
            let act = spec.hidden_activations[l - 1];
            for (p, (&x, &y)) in prev.iter_mut().zip(cache.pre[l - 1].iter().zip(&cache.activations[l])) {
                *p *= act.derivative(x, y);
            }
        }
        delta = prev;
    }
    Ok(delta)
}

pub const NETWORK_FORMAT: &str = "tastenet-mlp/v1";

/// A network spec with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Network {
    pub fn new(spec: MlpSpec, params: MlpParams) -> Result<Self> {
        params.check(&spec)?;
        Ok(Self { spec, params })
    }

    pub fn forward(&self, z: &[f64]) -> (Vec<f64>, ForwardCache) {
        forward(&self.params, &self.spec, z)
    }

    pub fn predict(&self, z: &[f64]) -> Vec<f64> {
        forward(&self.params, &self.spec, z).0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    /// One row per output unit.
    weights: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    format: String,
    spec: MlpSpec,
    input_dim: usize,
    layers: Vec<LayerDoc>,
}

impl Serialize for Network {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        NetworkDoc {
            format: NETWORK_FORMAT.to_string(),
            spec: self.spec.clone(),
            input_dim: self.params.input_dim(),
            layers: self
                .params
                .layers
                .iter()
                .map(|l| LayerDoc {
                    weights: l.weights.chunks(l.in_dim.max(1)).map(<[f64]>::to_vec).collect(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Network {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = NetworkDoc::deserialize(d)?;
        if doc.format != NETWORK_FORMAT {
            return Err(D::Error::custom(format!(
                "unsupported network format `{}` (expected `{NETWORK_FORMAT}`)",
                doc.format
            )));
        }
        let mut in_dim = doc.input_dim;
        let mut layers = Vec::with_capacity(doc.layers.len());
        for l in doc.layers {
            let out_dim = l.bias.len();
            if l.weights.len() != out_dim || l.weights.iter().any(|r| r.len() != in_dim) {
                return Err(D::Error::custom("weight matrix shape does not match bias/input size"));
            }
            layers.push(Layer {
                in_dim,
                out_dim,
                weights: l.weights.into_iter().flatten().collect(),
                bias: l.bias,
            });
            in_dim = out_dim;
        }
        Network::new(doc.spec, MlpParams { layers }).map_err(D::Error::custom)
    }
}
