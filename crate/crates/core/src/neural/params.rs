use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::NeuralError;
use crate::rng::{stream, Stream};

/// Architecture of a stacked LSTM next-token model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Hidden width of each LSTM layer, bottom to top.
    pub layer_sizes: Vec<usize>,
    pub dropout_rate: f64,
    pub sequence_length: usize,
    pub vocab_size: usize,
    pub rng_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layer_sizes: vec![256, 256, 256],
            dropout_rate: 0.3,
            sequence_length: 32,
            vocab_size: 1,
            rng_seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let invalid = |m: String| Err(NeuralError::InvalidConfig(m));
        if self.layer_sizes.is_empty() {
            return invalid("at least one LSTM layer is required".into());
        }
        if self.layer_sizes.contains(&0) {
            return invalid("layer widths must be at least 1".into());
        }
        if self.vocab_size == 0 {
            return invalid("vocabulary size must be at least 1".into());
        }
        if self.sequence_length == 0 {
            return invalid("sequence length must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return invalid(format!("dropout rate {} outside [0, 1)", self.dropout_rate));
        }
        Ok(())
    }

    /// Input width of layer `k`: one scalar for the bottom layer.
    pub fn input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            1
        } else {
            self.layer_sizes[layer - 1]
        }
    }

    pub fn top_width(&self) -> usize {
        *self.layer_sizes.last().expect("validated config has layers")
    }
}

/// Weights of one gate: `act(w·x + u·h + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

impl Gate {
    fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            w: Array2::zeros((hidden, input)),
            u: Array2::zeros((hidden, hidden)),
            b: Array1::zeros(hidden),
        }
    }

    pub fn preactivation(&self, x: &Array1<f64>, h: &Array1<f64>) -> Array1<f64> {
        self.w.dot(x) + self.u.dot(h) + &self.b
    }
}

/// Forget, input, candidate and output gates of one LSTM layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub forget: Gate,
    pub input: Gate,
    pub candidate: Gate,
    pub output: Gate,
}

pub const GATE_NAMES: [&str; 4] = ["forget", "input", "candidate", "output"];

impl LayerParams {
    pub fn zeros(hidden: usize, input: usize) -> Self {
        Self {
            forget: Gate::zeros(hidden, input),
            input: Gate::zeros(hidden, input),
            candidate: Gate::zeros(hidden, input),
            output: Gate::zeros(hidden, input),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forget.b.len()
    }

    pub fn input_dim(&self) -> usize {
        self.forget.w.ncols()
    }

    pub fn gates(&self) -> [&Gate; 4] {
        [&self.forget, &self.input, &self.candidate, &self.output]
    }

    pub fn gates_mut(&mut self) -> [&mut Gate; 4] {
        [
            &mut self.forget,
            &mut self.input,
            &mut self.candidate,
            &mut self.output,
        ]
    }

    pub fn check_shapes(&self, layer: usize) -> Result<(), NeuralError> {
        let (hidden, input) = (self.hidden(), self.input_dim());
        for (gate, name) in self.gates().into_iter().zip(GATE_NAMES) {
            let expect = |tensor: &str, shape: Vec<usize>, found: &[usize]| {
                if found == shape.as_slice() {
                    Ok(())
                } else {
                    Err(NeuralError::Shape {
                        tensor: format!("layer{layer}.{name}.{tensor}"),
                        expected: shape,
                        found: found.to_vec(),
                    })
                }
            };
            expect("w", vec![hidden, input], gate.w.shape())?;
            expect("u", vec![hidden, hidden], gate.u.shape())?;
            expect("b", vec![hidden], gate.b.shape())?;
        }
        Ok(())
    }
}

/// All trainable tensors. Also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters {
    pub layers: Vec<LayerParams>,
    /// `[vocab_size, top_width]`
    pub dense_w: Array2<f64>,
    pub dense_b: Array1<f64>,
}

impl Parameters {
    pub fn zeros(config: &ModelConfig) -> Self {
        let layers = config
            .layer_sizes
            .iter()
            .enumerate()
            .map(|(k, &h)| LayerParams::zeros(h, config.input_dim(k)))
            .collect();
        Self {
            layers,
            dense_w: Array2::zeros((config.vocab_size, config.top_width())),
            dense_b: Array1::zeros(config.vocab_size),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams::zeros(l.hidden(), l.input_dim()))
                .collect(),
            dense_w: Array2::zeros(self.dense_w.raw_dim()),
            dense_b: Array1::zeros(self.dense_b.raw_dim()),
        }
    }

    /// Tensor names and shapes in the canonical storage order.
    pub fn directory(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            for (gate, name) in layer.gates().into_iter().zip(GATE_NAMES) {
                out.push((format!("layer{k}.{name}.w"), gate.w.shape().to_vec()));
                out.push((format!("layer{k}.{name}.u"), gate.u.shape().to_vec()));
                out.push((format!("layer{k}.{name}.b"), gate.b.shape().to_vec()));
            }
        }
        out.push(("dense.w".into(), self.dense_w.shape().to_vec()));
        out.push(("dense.b".into(), self.dense_b.shape().to_vec()));
        out
    }

    /// Row-major views in the same order as [`Parameters::directory`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            for gate in layer.gates() {
                out.push(gate.w.as_slice().expect("standard layout"));
                out.push(gate.u.as_slice().expect("standard layout"));
                out.push(gate.b.as_slice().expect("standard layout"));
            }
        }
        out.push(self.dense_w.as_slice().expect("standard layout"));
        out.push(self.dense_b.as_slice().expect("standard layout"));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            for gate in layer.gates_mut() {
                out.push(gate.w.as_slice_mut().expect("standard layout"));
                out.push(gate.u.as_slice_mut().expect("standard layout"));
                out.push(gate.b.as_slice_mut().expect("standard layout"));
            }
        }
        out.push(self.dense_w.as_slice_mut().expect("standard layout"));
        out.push(self.dense_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn add_assign(&mut self, other: &Parameters) {
        for (a, b) in self.slices_mut().into_iter().zip(other.slices()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for x in s {
                *x *= factor;
            }
        }
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|x| x.is_finite()))
    }
}

/// A model: its configuration and trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub params: Parameters,
}

impl ModelWeights {
    /// Uniform(-k, k) with `k = 1/sqrt(fan_in)` per matrix, zero biases
    /// except the forget gate's, which start at 1.
    pub fn init(config: ModelConfig) -> Result<Self, NeuralError> {
        config.validate()?;
        let mut rng = stream(config.rng_seed, Stream::Init);
        let mut params = Parameters::zeros(&config);
        let mut fill = |m: &mut Array2<f64>| {
            let k = 1.0 / (m.ncols() as f64).sqrt();
            m.mapv_inplace(|_| rng.random_range(-k..=k));
        };
        for layer in &mut params.layers {
            for gate in layer.gates_mut() {
                fill(&mut gate.w);
                fill(&mut gate.u);
            }
            layer.forget.b.fill(1.0);
        }
        fill(&mut params.dense_w);
        Ok(Self { config, params })
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        self.config.validate()?;
        let expected = Parameters::zeros(&self.config);
        let (want, have) = (expected.directory(), self.params.directory());
        if want.len() != have.len() {
            return Err(NeuralError::Shape {
                tensor: "model".into(),
                expected: vec![want.len()],
                found: vec![have.len()],
            });
        }
        for ((name, shape), (_, found)) in want.into_iter().zip(have) {
            if shape != found {
                return Err(NeuralError::Shape {
                    tensor: name,
                    expected: shape,
                    found,
                });
            }
        }
        if !self.params.is_finite() {
            return Err(NeuralError::NonFinite {
                location: "stored weights".into(),
            });
        }
        Ok(())
    }

    /// Confirms these weights accept windows of `sequence_length` tokens over
    /// a vocabulary of `vocab_size`.
    pub fn check_compatible(
        &self,
        sequence_length: usize,
        vocab_size: usize,
    ) -> Result<(), NeuralError> {
        let have = (self.config.sequence_length, self.config.vocab_size);
        if have != (sequence_length, vocab_size) {
            return Err(NeuralError::Incompatible {
                weights: format!("input [{}, 1] -> output [{}]", have.0, have.1),
                session: format!("input [{sequence_length}, 1] -> output [{vocab_size}]"),
            });
        }
        Ok(())
    }
}
