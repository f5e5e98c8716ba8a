//! Predictor architectures: a plain tanh MLP and a residual-block network.
//!
//! Both rescale every input coordinate affinely onto [-1, 1] over the
//! computational box before the first layer. The rescale is part of the
//! predictor, so derivatives reported by [`forward`] are with respect to the
//! raw coordinates.

pub mod batch;
pub mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{DiffValue, MAX_DIM};
use crate::error::{Error, Result};
pub use batch::{Channels, Engine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
}

/// Per-coordinate box mapped onto [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        Self { lower: vec![-1.0; dim], upper: vec![1.0; dim] }
    }

    /// (offset, factor) with x̂ = factor * x + offset.
    pub fn coefficients(&self) -> Vec<(f64, f64)> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| {
                let f = 2.0 / (hi - lo);
                (-1.0 - f * lo, f)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_layers: usize,
    pub width: usize,
    #[serde(default)]
    pub activation: Activation,
    pub scaling: InputScaling,
}

/// Stack of residual blocks `z ↦ F(z) + w_s z` followed by a linear head.
///
/// `F` is `block_hidden_layers` tanh layers of `width` units. `w_s` is the
/// identity when the block input already has `width` entries and a trainable
/// bias-free projection otherwise (only the first block, in practice).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResNetArchitecture {
    pub input_dim: usize,
    pub blocks: usize,
    pub block_hidden_layers: usize,
    pub width: usize,
    #[serde(default)]
    pub activation: Activation,
    pub scaling: InputScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Architecture {
    Mlp(MlpArchitecture),
    #[serde(rename = "resnet")]
    ResNet(ResNetArchitecture),
}

/// Shape of one affine map `out x in`, with or without a bias vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub bias: bool,
}

impl LayerShape {
    pub fn len(&self) -> usize {
        self.rows * self.cols + if self.bias { self.rows } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Architecture {
    /// Default MLP: 5 hidden layers of 20 tanh units.
    pub fn mlp(scaling: InputScaling) -> Self {
        Architecture::Mlp(MlpArchitecture {
            input_dim: scaling.lower.len(),
            hidden_layers: 5,
            width: 20,
            activation: Activation::Tanh,
            scaling,
        })
    }

    /// Default residual network: 3 blocks of 2 tanh layers, 20 units wide.
    pub fn resnet(scaling: InputScaling) -> Self {
        Architecture::ResNet(ResNetArchitecture {
            input_dim: scaling.lower.len(),
            blocks: 3,
            block_hidden_layers: 2,
            width: 20,
            activation: Activation::Tanh,
            scaling,
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Mlp(a) => a.input_dim,
            Architecture::ResNet(a) => a.input_dim,
        }
    }

    pub fn width(&self) -> usize {
        match self {
            Architecture::Mlp(a) => a.width,
            Architecture::ResNet(a) => a.width,
        }
    }

    pub fn scaling(&self) -> &InputScaling {
        match self {
            Architecture::Mlp(a) => &a.scaling,
            Architecture::ResNet(a) => &a.scaling,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Architecture::Mlp(_) => "mlp",
            Architecture::ResNet(_) => "resnet",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.input_dim();
        if d == 0 || d > MAX_DIM {
            return Err(Error::Config(format!("input_dim {d} must be in 1..={MAX_DIM}")));
        }
        let s = self.scaling();
        if s.lower.len() != d || s.upper.len() != d {
            return Err(Error::Config("scaling bounds do not match input_dim".into()));
        }
        if s.lower.iter().zip(&s.upper).any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::Config("scaling bounds must be finite and strictly ordered".into()));
        }
        if self.width() == 0 {
            return Err(Error::Config("width must be >= 1".into()));
        }
        match self {
            Architecture::Mlp(a) if a.hidden_layers == 0 => Err(Error::Config("hidden_layers must be >= 1".into())),
            Architecture::ResNet(a) if a.blocks == 0 || a.block_hidden_layers == 0 => {
                Err(Error::Config("blocks and block_hidden_layers must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Layer order used by [`NetworkParams`].
    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        let affine = |rows, cols| LayerShape { rows, cols, bias: true };
        match self {
            Architecture::Mlp(a) => {
                let mut v = vec![affine(a.width, a.input_dim)];
                v.extend((1..a.hidden_layers).map(|_| affine(a.width, a.width)));
                v.push(affine(1, a.width));
                v
            }
            Architecture::ResNet(a) => {
                let mut v = Vec::new();
                for b in 0..a.blocks {
                    let din = if b == 0 { a.input_dim } else { a.width };
                    v.push(affine(a.width, din));
                    v.extend((1..a.block_hidden_layers).map(|_| affine(a.width, a.width)));
                    if din != a.width {
                        v.push(LayerShape { rows: a.width, cols: din, bias: false });
                    }
                }
                v.push(affine(1, a.width));
                v
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(LayerShape::len).sum()
    }
}

/// All weights and biases Θ, stored flat in layer order (weights row-major,
/// then bias).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    shapes: Vec<LayerShape>,
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl NetworkParams {
    pub fn zeros(shapes: Vec<LayerShape>) -> Self {
        let n = shapes.iter().map(LayerShape::len).sum();
        Self::from_vec(shapes, vec![0.0; n]).expect("consistent by construction")
    }

    pub fn from_vec(shapes: Vec<LayerShape>, values: Vec<f64>) -> Result<Self> {
        let mut offsets = Vec::with_capacity(shapes.len());
        let mut acc = 0;
        for s in &shapes {
            offsets.push(acc);
            acc += s.len();
        }
        if acc != values.len() {
            return Err(Error::Shape(format!("{} values for {acc} parameters", values.len())));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i}")));
        }
        Ok(Self { shapes, offsets, values })
    }

    pub fn shapes(&self) -> &[LayerShape] {
        &self.shapes
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

    pub fn layer_count(&self) -> usize {
        self.shapes.len()
    }

    pub fn weights(&self, layer: usize) -> &[f64] {
        let s = self.shapes[layer];
        &self.values[self.offsets[layer]..self.offsets[layer] + s.rows * s.cols]
    }

    pub fn weights_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.shapes[layer];
        &mut self.values[self.offsets[layer]..self.offsets[layer] + s.rows * s.cols]
    }

    /// Empty for bias-free layers.
    pub fn bias(&self, layer: usize) -> &[f64] {
        let s = self.shapes[layer];
        let start = self.offsets[layer] + s.rows * s.cols;
        let len = if s.bias { s.rows } else { 0 };
        &self.values[start..start + len]
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.shapes[layer];
        let start = self.offsets[layer] + s.rows * s.cols;
        let len = if s.bias { s.rows } else { 0 };
        &mut self.values[start..start + len]
    }

    pub(crate) fn offset(&self, layer: usize) -> usize {
        self.offsets[layer]
    }

    /// Replaces the values, keeping the layout.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::from_vec(self.shapes.clone(), values)
    }
}

/// Glorot-uniform weights and zero biases, reproducible from `seed`.
pub fn init_params(arch: &Architecture, seed: u64) -> NetworkParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(arch.layer_shapes());
    for l in 0..params.layer_count() {
        let s = params.shapes()[l];
        let limit = (6.0 / (s.rows + s.cols) as f64).sqrt();
        for w in params.weights_mut(l) {
            *w = rng.random_range(-limit..limit);
        }
    }
    params
}

/// Network output and its input derivatives at a single point.
pub fn forward(arch: &Architecture, params: &NetworkParams, x: &[f64]) -> Result<DiffValue> {
    let engine = Engine::new(arch)?;
    let channels = Channels::full(arch.input_dim());
    let fwd = engine.forward(params, x, &channels)?;
    let jet = fwd.jet(0);
    if !jet.is_finite() {
        return Err(Error::Numeric(format!("network output at {x:?}")));
    }
    Ok(jet)
}
