use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{window_gradient, DropoutMasks};
use super::params::{ModelConfig, ModelWeights, Parameters};
use super::NeuralError;
use crate::corpus::WindowDataset;
use crate::rng::{stream, Stream};

/// Windows evaluated concurrently before their gradients are folded in.
const PARALLEL_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient norm ceiling per batch; `None` disables clipping.
    pub gradient_clip_norm: Option<f64>,
    pub optimizer: Optimizer,
    /// Drives batch shuffling and dropout masks.
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 64,
            learning_rate: 1e-3,
            gradient_clip_norm: Some(5.0),
            optimizer: Optimizer::adam(),
            rng_seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NeuralError> {
        let invalid = |m: &str| Err(NeuralError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return invalid("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return invalid("batch size must be at least 1");
        }
        // zero is accepted: it freezes the weights
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return invalid("learning rate must be a finite non-negative number");
        }
        if let Some(c) = self.gradient_clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return invalid("gradient clip norm must be positive");
            }
        }
        if let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || epsilon <= 0.0 {
                return invalid("adam needs betas in [0, 1) and a positive epsilon");
            }
        }
        Ok(())
    }
}

/// Final weights plus the mean training loss of every epoch.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: ModelWeights,
    pub history: Vec<f64>,
}

struct AdamState {
    m: Parameters,
    v: Parameters,
    step: i32,
}

/// Mini-batch training from a fresh initialization.
///
/// Batches are reshuffled each epoch from `train_config.rng_seed`. Batch
/// members are evaluated in parallel but their gradients are summed in batch
/// order, so results are bitwise reproducible regardless of thread count.
pub fn train(
    dataset: &WindowDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome, NeuralError> {
    train_config.validate()?;
    if dataset.is_empty() {
        return Err(NeuralError::InvalidConfig("dataset has no windows".into()));
    }
    let mut weights = ModelWeights::init(model_config.clone())?;
    weights.check_compatible(dataset.sequence_length, dataset.vocab_size)?;

    let inputs: Vec<Vec<f64>> = (0..dataset.len()).map(|w| dataset.input(w)).collect();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut shuffle_rng = stream(train_config.rng_seed, Stream::Shuffle);
    let mut dropout_rng = stream(train_config.rng_seed, Stream::Dropout);
    let mut adam = match train_config.optimizer {
        Optimizer::Adam { .. } => Some(AdamState {
            m: weights.params.zeros_like(),
            v: weights.params.zeros_like(),
            step: 0,
        }),
        Optimizer::Sgd => None,
    };

    let mut history = Vec::with_capacity(train_config.epochs);
    let mut losses = vec![0.0; dataset.len()];
    for epoch in 0..train_config.epochs {
        order.shuffle(&mut shuffle_rng);
        for (b, batch) in order.chunks(train_config.batch_size).enumerate() {
            let seeds: Vec<u64> = batch.iter().map(|_| dropout_rng.random()).collect();
            let mut grad = weights.params.zeros_like();
            for (members, seeds) in batch.chunks(PARALLEL_CHUNK).zip(seeds.chunks(PARALLEL_CHUNK)) {
                let results: Vec<Result<(f64, Parameters), NeuralError>> = members
                    .par_iter()
                    .zip(seeds)
                    .map(|(&w, &seed)| {
                        let masks = (weights.config.dropout_rate > 0.0).then(|| {
                            DropoutMasks::sample(&weights, &mut ChaCha8Rng::seed_from_u64(seed))
                        });
                        window_gradient(&weights, &inputs[w], dataset.target(w), masks)
                    })
                    .collect();
                for (&w, r) in members.iter().zip(results) {
                    let (l, g) = r.map_err(|e| NeuralError::Diverged {
                        epoch,
                        batch: b,
                        detail: e.to_string(),
                    })?;
                    if !l.is_finite() {
                        return Err(NeuralError::Diverged {
                            epoch,
                            batch: b,
                            detail: "loss is not finite".into(),
                        });
                    }
                    losses[w] = l;
                    grad.add_assign(&g);
                }
            }
            grad.scale(1.0 / batch.len() as f64);
            if let Some(limit) = train_config.gradient_clip_norm {
                let norm = grad.norm();
                if norm > limit {
                    grad.scale(limit / norm);
                }
            }
            apply_update(&mut weights.params, &grad, train_config, adam.as_mut());
            if !weights.params.is_finite() {
                return Err(NeuralError::Diverged {
                    epoch,
                    batch: b,
                    detail: "weights became non-finite".into(),
                });
            }
        }
        history.push(losses.iter().sum::<f64>() / losses.len() as f64);
    }
    Ok(TrainOutcome { weights, history })
}

fn apply_update(
    params: &mut Parameters,
    grad: &Parameters,
    cfg: &TrainConfig,
    adam: Option<&mut AdamState>,
) {
    let lr = cfg.learning_rate;
    match (cfg.optimizer, adam) {
        (
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            },
            Some(state),
        ) => {
            state.step += 1;
            let c1 = 1.0 - beta1.powi(state.step);
            let c2 = 1.0 - beta2.powi(state.step);
            for (((p, g), m), v) in params
                .slices_mut()
                .into_iter()
                .zip(grad.slices())
                .zip(state.m.slices_mut())
                .zip(state.v.slices_mut())
            {
                for k in 0..p.len() {
                    m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
                    v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
                    let m_hat = m[k] / c1;
                    let v_hat = v[k] / c2;
                    p[k] -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        _ => {
            for (p, g) in params.slices_mut().into_iter().zip(grad.slices()) {
                for (x, d) in p.iter_mut().zip(g) {
                    *x -= lr * d;
                }
            }
        }
    }
}
