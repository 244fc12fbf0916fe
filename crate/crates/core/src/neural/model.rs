use ndarray::{Array1, Array2, Axis};
use rand::Rng;

use super::cell::{cell_forward, CellCache};
use super::params::{ModelWeights, Parameters};
use super::NeuralError;

/// Probabilities below this are clamped before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Inverted dropout: zero each entry with probability `rate`, scale the rest
/// by `1 / (1 - rate)`. Identity outside training.
pub fn dropout<R: Rng + ?Sized>(
    v: &Array1<f64>,
    rate: f64,
    mode: Mode,
    rng: &mut R,
) -> Array1<f64> {
    match mode {
        Mode::Infer => v.clone(),
        Mode::Train => v * &dropout_mask(v.len(), rate, rng),
    }
}

fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Array1<f64> {
    if rate == 0.0 {
        return Array1::ones(len);
    }
    let keep = 1.0 / (1.0 - rate);
    Array1::from_shape_fn(len, |_| if rng.random::<f64>() < rate { 0.0 } else { keep })
}

/// Dropout masks applied to each layer's output, indexed `[layer][timestep]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks(Vec<Vec<Array1<f64>>>);

impl DropoutMasks {
    pub fn sample<R: Rng + ?Sized>(weights: &ModelWeights, rng: &mut R) -> Self {
        let cfg = &weights.config;
        Self(
            cfg.layer_sizes
                .iter()
                .map(|&h| {
                    (0..cfg.sequence_length)
                        .map(|_| dropout_mask(h, cfg.dropout_rate, rng))
                        .collect()
                })
                .collect(),
        )
    }
}

pub fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let e = logits.mapv(|v| (v - max).exp());
    let sum = e.sum();
    e / sum
}

/// Categorical cross-entropy against a one-hot target.
pub fn loss(probabilities: &[f64], target_one_hot: &[f64]) -> f64 {
    probabilities
        .iter()
        .zip(target_one_hot)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&p, &t)| -t * p.max(PROB_FLOOR).ln())
        .sum()
}

/// Cross-entropy for a target given by index.
pub fn loss_at(probabilities: &[f64], target: usize) -> f64 {
    -probabilities[target].max(PROB_FLOOR).ln()
}

/// Everything a forward pass computed, for [`backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    /// `[layer][timestep]`
    pub cells: Vec<Vec<CellCache>>,
    pub masks: Option<DropoutMasks>,
    /// Top layer output after dropout at the last timestep.
    pub features: Array1<f64>,
    pub probabilities: Array1<f64>,
}

fn check_window(weights: &ModelWeights, window: &[f64]) -> Result<(), NeuralError> {
    if window.len() != weights.config.sequence_length {
        return Err(NeuralError::Shape {
            tensor: "window".into(),
            expected: vec![weights.config.sequence_length, 1],
            found: vec![window.len(), 1],
        });
    }
    Ok(())
}

/// Next-token distribution for one normalized window.
pub fn forward<R: Rng + ?Sized>(
    weights: &ModelWeights,
    window: &[f64],
    mode: Mode,
    rng: &mut R,
) -> Result<Array1<f64>, NeuralError> {
    let masks = match mode {
        Mode::Train if weights.config.dropout_rate > 0.0 => {
            Some(DropoutMasks::sample(weights, rng))
        }
        _ => None,
    };
    Ok(forward_trace(weights, window, masks)?.probabilities)
}

/// Forward pass with explicit dropout masks (`None` = inference).
pub fn forward_trace(
    weights: &ModelWeights,
    window: &[f64],
    masks: Option<DropoutMasks>,
) -> Result<Trace, NeuralError> {
    check_window(weights, window)?;
    let params = &weights.params;
    let steps = window.len();

    let mut sequence: Vec<Array1<f64>> = window.iter().map(|&v| Array1::from_elem(1, v)).collect();
    let mut cells = Vec::with_capacity(params.layers.len());
    for (k, layer) in params.layers.iter().enumerate() {
        let hidden = layer.hidden();
        let mut h = Array1::zeros(hidden);
        let mut c = Array1::zeros(hidden);
        let mut caches = Vec::with_capacity(steps);
        let mut outputs = Vec::with_capacity(steps);
        for (t, x) in sequence.iter().enumerate() {
            let cache = cell_forward(x, &h, &c, layer)?;
            if !cache.h.iter().chain(cache.c.iter()).all(|v| v.is_finite()) {
                return Err(NeuralError::NonFinite {
                    location: format!("layer {k}, timestep {t}"),
                });
            }
            h = cache.h.clone();
            c = cache.c.clone();
            outputs.push(match &masks {
                Some(m) => &cache.h * &m.0[k][t],
                None => cache.h.clone(),
            });
            caches.push(cache);
        }
        cells.push(caches);
        sequence = outputs;
    }

    let features = sequence.pop().expect("window has at least one step");
    let logits = params.dense_w.dot(&features) + &params.dense_b;
    let probabilities = softmax(&logits);
    if !probabilities.iter().all(|p| p.is_finite()) {
        return Err(NeuralError::NonFinite {
            location: "dense output".into(),
        });
    }
    Ok(Trace {
        cells,
        masks,
        features,
        probabilities,
    })
}

fn outer_add(acc: &mut Array2<f64>, a: &Array1<f64>, b: &Array1<f64>) {
    for (mut row, &ai) in acc.axis_iter_mut(Axis(0)).zip(a) {
        if ai != 0.0 {
            row.scaled_add(ai, b);
        }
    }
}

/// Backpropagation through time of `-ln p[target]` for the pass in `trace`,
/// reusing its dropout masks.
pub fn backward(
    weights: &ModelWeights,
    trace: &Trace,
    target: usize,
) -> Result<Parameters, NeuralError> {
    let params = &weights.params;
    let n = params.dense_b.len();
    if target >= n {
        return Err(NeuralError::Shape {
            tensor: "target".into(),
            expected: vec![n],
            found: vec![target],
        });
    }
    let mut grads = params.zeros_like();

    let mut dlogits = trace.probabilities.clone();
    if trace.probabilities[target] < PROB_FLOOR {
        // clamped region: the loss is flat in the logits
        dlogits.fill(0.0);
    } else {
        dlogits[target] -= 1.0;
    }
    outer_add(&mut grads.dense_w, &dlogits, &trace.features);
    grads.dense_b += &dlogits;

    let steps = trace.cells[0].len();
    let top = params.layers.len() - 1;
    // Gradient w.r.t. each layer's (post-dropout) output sequence.
    let mut d_out: Vec<Array1<f64>> = (0..steps)
        .map(|_| Array1::zeros(params.layers[top].hidden()))
        .collect();
    d_out[steps - 1] = params.dense_w.t().dot(&dlogits);

    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let g = &mut grads.layers[k];
        let hidden = layer.hidden();
        let mut dh_next = Array1::<f64>::zeros(hidden);
        let mut dc_next = Array1::<f64>::zeros(hidden);
        let mut d_in: Vec<Array1<f64>> = Vec::with_capacity(if k > 0 { steps } else { 0 });

        for t in (0..steps).rev() {
            let cache = &trace.cells[k][t];
            let mut dh = match &trace.masks {
                Some(m) => &d_out[t] * &m.0[k][t],
                None => d_out[t].clone(),
            };
            dh += &dh_next;

            let d_o = &dh * &cache.tanh_c;
            let da_o = &d_o * &cache.output.mapv(|o| o * (1.0 - o));
            let dc = &dc_next + &(&dh * &cache.output * &cache.tanh_c.mapv(|v| 1.0 - v * v));
            let da_f = &dc * &cache.c_prev * &cache.forget.mapv(|f| f * (1.0 - f));
            let da_i = &dc * &cache.candidate * &cache.input.mapv(|i| i * (1.0 - i));
            let da_g = &dc * &cache.input * &cache.candidate.mapv(|v| 1.0 - v * v);
            dc_next = &dc * &cache.forget;

            let mut dh_prev = Array1::<f64>::zeros(hidden);
            let mut dx = Array1::<f64>::zeros(layer.input_dim());
            for (gate, (gg, da)) in layer.gates().into_iter().zip(
                g.gates_mut()
                    .into_iter()
                    .zip([&da_f, &da_i, &da_g, &da_o]),
            ) {
                outer_add(&mut gg.w, da, &cache.x);
                outer_add(&mut gg.u, da, &cache.h_prev);
                gg.b += da;
                dh_prev += &gate.u.t().dot(da);
                if k > 0 {
                    dx += &gate.w.t().dot(da);
                }
            }
            dh_next = dh_prev;
            if k > 0 {
                d_in.push(dx);
            }
        }
        d_in.reverse();
        d_out = d_in;
    }

    if !grads.is_finite() {
        return Err(NeuralError::NonFinite {
            location: "gradients".into(),
        });
    }
    Ok(grads)
}

/// Loss and gradient of one window under the given masks.
pub fn window_gradient(
    weights: &ModelWeights,
    window: &[f64],
    target: usize,
    masks: Option<DropoutMasks>,
) -> Result<(f64, Parameters), NeuralError> {
    let trace = forward_trace(weights, window, masks)?;
    let l = loss_at(trace.probabilities.as_slice().expect("contiguous"), target);
    Ok((l, backward(weights, &trace, target)?))
}

/// Summed gradient over a batch, accumulated in batch order.
pub fn batch_gradient(
    weights: &ModelWeights,
    batch: &[(&[f64], usize)],
) -> Result<(f64, Parameters), NeuralError> {
    let mut total = weights.params.zeros_like();
    let mut loss_sum = 0.0;
    for (window, target) in batch {
        let (l, g) = window_gradient(weights, window, *target, None)?;
        loss_sum += l;
        total.add_assign(&g);
    }
    Ok((loss_sum, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::cell::sigmoid;
    use crate::neural::params::ModelConfig;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(layers: Vec<usize>, n: usize, len: usize, dropout: f64) -> ModelWeights {
        ModelWeights::init(ModelConfig {
            layer_sizes: layers,
            dropout_rate: dropout,
            sequence_length: len,
            vocab_size: n,
            rng_seed: 3,
        })
        .unwrap()
    }

    #[test]
    fn softmax_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = tiny(vec![4, 3], 6, 3, 0.2);
        let p = forward(&w, &[0.1, 0.5, 0.0], Mode::Infer, &mut rng).unwrap();
        assert!((p.sum() - 1.0).abs() < 1e-9);
        assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let big = softmax(&array![1000.0, -1000.0, 999.0]);
        assert!((big.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_dense_layer_is_uniform() {
        let mut w = tiny(vec![3], 4, 2, 0.0);
        w.params.dense_w.fill(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = forward(&w, &[0.25, 0.5], Mode::Infer, &mut rng).unwrap();
        assert!(p.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn hand_computed_tiny_model() {
        // 1 layer, width 2, N = 2, L = 1; only a few weights set.
        let mut w = tiny(vec![2], 2, 1, 0.0);
        for layer in &mut w.params.layers {
            for gate in layer.gates_mut() {
                gate.w.fill(0.0);
                gate.u.fill(0.0);
                gate.b.fill(0.0);
            }
        }
        let l = &mut w.params.layers[0];
        l.input.w[[0, 0]] = 1.0;
        l.candidate.w[[0, 0]] = 2.0;
        l.candidate.w[[1, 0]] = -1.0;
        l.output.b[1] = 0.5;
        w.params.dense_w = array![[1.0, 0.0], [0.0, -1.0]];
        w.params.dense_b = array![0.0, 0.3];

        let x = 0.5;
        let i0 = sigmoid(x);
        let c0 = i0 * (2.0 * x).tanh();
        let h0 = 0.5 * c0.tanh();
        let i1 = 0.5;
        let c1 = i1 * (-x).tanh();
        let h1 = sigmoid(0.5) * c1.tanh();
        let z0 = h0;
        let z1 = -h1 + 0.3;
        let p0 = 1.0 / (1.0 + (z1 - z0).exp());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = forward(&w, &[x], Mode::Infer, &mut rng).unwrap();
        assert!((p[0] - p0).abs() < 1e-10);
        assert!((p[1] - (1.0 - p0)).abs() < 1e-10);
    }

    #[test]
    fn infer_mode_ignores_dropout_rate_and_rng() {
        let mut w = tiny(vec![5, 4], 3, 3, 0.0);
        let x = [0.0, 1.0 / 3.0, 2.0 / 3.0];
        let a = forward(&w, &x, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        w.config.dropout_rate = 0.7;
        let b = forward(&w, &x, Mode::Infer, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dropout_identity_cases() {
        let v = array![1.0, -2.0, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(dropout(&v, 0.0, Mode::Train, &mut rng), v);
        assert_eq!(dropout(&v, 0.0, Mode::Infer, &mut rng), v);
        assert_eq!(dropout(&v, 0.9, Mode::Infer, &mut rng), v);
        let d = dropout(&v, 0.5, Mode::Train, &mut rng);
        for (a, b) in d.iter().zip(&v) {
            assert!(*a == 0.0 || *a == 2.0 * b);
        }
    }

    #[test]
    fn dropout_preserves_expectation() {
        let v = array![1.0, -2.0, 0.5];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws = 100_000;
        let mut sum = Array1::<f64>::zeros(3);
        for _ in 0..draws {
            sum += &dropout(&v, 0.5, Mode::Train, &mut rng);
        }
        let mean = sum / draws as f64;
        for (m, x) in mean.iter().zip(&v) {
            // each draw is 0 or 2x, so the per-draw std is |x|
            let sigma = x.abs() / (draws as f64).sqrt();
            assert!((m - x).abs() < 3.0 * sigma, "mean {m} vs {x}");
        }
    }

    #[test]
    fn loss_values() {
        assert_eq!(loss(&[0.0, 1.0], &[0.0, 1.0]), 0.0);
        assert!((loss(&[0.25; 4], &[0.0, 0.0, 1.0, 0.0]) - 4f64.ln()).abs() < 1e-12);
        assert!((loss(&[1.0, 1e-20], &[0.0, 1.0]) + PROB_FLOOR.ln()).abs() < 1e-12);
        assert_eq!(loss_at(&[0.5, 0.5], 0), 2f64.ln());
    }

    #[test]
    fn saturated_target_has_vanishing_gradient() {
        let mut w = tiny(vec![3], 3, 2, 0.0);
        w.params.dense_b = array![0.0, 40.0, 0.0];
        w.params.dense_w.fill(0.0);
        let (l, g) = window_gradient(&w, &[0.0, 0.5], 1, None).unwrap();
        assert!(l < 1e-9);
        assert!(g.norm() < 1e-6);
    }

    #[test]
    fn duplicate_windows_double_the_gradient() {
        let w = tiny(vec![3, 2], 4, 3, 0.0);
        let x = [0.25, 0.5, 0.0];
        let (_, single) = batch_gradient(&w, &[(&x, 2)]).unwrap();
        let (_, double) = batch_gradient(&w, &[(&x, 2), (&x, 2)]).unwrap();
        for (a, b) in single.slices().iter().zip(double.slices()) {
            for (s, d) in a.iter().zip(b) {
                assert_eq!(2.0 * s, *d);
            }
        }
    }

    #[test]
    fn wrong_window_length() {
        let w = tiny(vec![2], 2, 3, 0.0);
        assert!(matches!(
            forward_trace(&w, &[0.0, 0.5], None),
            Err(NeuralError::Shape { .. })
        ));
    }
}
