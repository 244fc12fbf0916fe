//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::PathBuf;

use scorelstm::corpus::{extract_horizontal, make_windows, normalize, Token, Vocabulary, WindowDataset};
use scorelstm::neural::{forward_trace, loss_at, DropoutMasks, ModelWeights};
use scorelstm::score::{parse_score, Score, ScoreFormat};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture_path(name)).unwrap()
}

pub fn load_fixture(name: &str) -> Score {
    let bytes = fixture_bytes(name);
    parse_score(&bytes, ScoreFormat::detect(&bytes)).unwrap().score
}

pub const FIXTURES: [&str; 3] = ["ode_to_joy.musicxml", "two_part.musicxml", "voices.musicxml"];

/// Violin line of the Ode to Joy fixture.
pub fn ode_tokens() -> Vec<Token> {
    extract_horizontal(&load_fixture("ode_to_joy.musicxml"), "Violin").unwrap()
}

pub fn ode_dataset(sequence_length: usize) -> (Vocabulary, WindowDataset) {
    let tokens = ode_tokens();
    let vocab = Vocabulary::build(&tokens).unwrap();
    let encoded = vocab.encode_all(&tokens).unwrap();
    let ds = normalize(make_windows(&encoded, sequence_length).unwrap(), vocab.len()).unwrap();
    (vocab, ds)
}

/// Loss of one window under fixed masks, straight from the forward pass.
pub fn window_loss(
    weights: &ModelWeights,
    window: &[f64],
    target: usize,
    masks: &Option<DropoutMasks>,
) -> f64 {
    let trace = forward_trace(weights, window, masks.clone()).unwrap();
    loss_at(trace.probabilities.as_slice().unwrap(), target)
}

/// Central-difference estimate of d loss / d theta for every parameter, in
/// the order of `Parameters::slices`.
pub fn numeric_gradient(
    weights: &ModelWeights,
    window: &[f64],
    target: usize,
    masks: &Option<DropoutMasks>,
    eps: f64,
) -> Vec<Vec<f64>> {
    let mut probe = weights.clone();
    let sizes: Vec<usize> = weights.params.slices().iter().map(|s| s.len()).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for (t, &n) in sizes.iter().enumerate() {
        let mut g = Vec::with_capacity(n);
        for i in 0..n {
            let orig = probe.params.slices()[t][i];
            probe.params.slices_mut()[t][i] = orig + eps;
            let up = window_loss(&probe, window, target, masks);
            probe.params.slices_mut()[t][i] = orig - eps;
            let down = window_loss(&probe, window, target, masks);
            probe.params.slices_mut()[t][i] = orig;
            g.push((up - down) / (2.0 * eps));
        }
        out.push(g);
    }
    out
}

/// `|a - n| / max(|a|, |n|, floor)`; the floor keeps near-zero entries from
/// turning round-off into huge ratios.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Interleaving by exhaustive scan: every distinct onset in ascending order,
/// then each requested part in request order, then by lowest pitch with
/// rests first.
pub fn vertical_oracle(score: &Score, parts: &[&str]) -> Vec<Token> {
    let mut onsets: Vec<scorelstm::score::QuarterLength> = score
        .parts
        .iter()
        .flat_map(|p| p.events.iter().map(|e| e.offset))
        .collect();
    onsets.sort();
    onsets.dedup();
    let mut out = Vec::new();
    for onset in onsets {
        for name in parts {
            let part = score.parts.iter().find(|p| p.name == *name).unwrap();
            let mut here: Vec<&scorelstm::score::NoteEvent> =
                part.events.iter().filter(|e| e.offset == onset).collect();
            let lowest = |e: &scorelstm::score::NoteEvent| e.pitches.iter().map(|p| p.midi() as i32).min().unwrap_or(-1);
            // insertion sort keeps equal keys in score order
            for i in 1..here.len() {
                let mut j = i;
                while j > 0 && lowest(here[j - 1]) > lowest(here[j]) {
                    here.swap(j - 1, j);
                    j -= 1;
                }
            }
            out.extend(here.into_iter().map(|e| Token::from_event(e, Some(part.name.clone()))));
        }
    }
    out
}

/// Random small architecture and a random window for it. Half of the models
/// use dropout, with masks drawn once and held fixed.
pub fn random_case<R: rand::Rng>(
    rng: &mut R,
) -> (ModelWeights, Vec<f64>, usize, Option<DropoutMasks>) {
    use scorelstm::neural::ModelConfig;
    let layers = rng.random_range(1..=3);
    let config = ModelConfig {
        layer_sizes: (0..layers).map(|_| rng.random_range(1..=8)).collect(),
        dropout_rate: if rng.random::<bool>() { 0.3 } else { 0.0 },
        sequence_length: rng.random_range(1..=5),
        vocab_size: rng.random_range(2..=10),
        rng_seed: rng.random(),
    };
    let weights = ModelWeights::init(config.clone()).unwrap();
    let window: Vec<f64> = (0..config.sequence_length)
        .map(|_| rng.random_range(0..config.vocab_size) as f64 / config.vocab_size as f64)
        .collect();
    let target = rng.random_range(0..config.vocab_size);
    let masks = (config.dropout_rate > 0.0).then(|| DropoutMasks::sample(&weights, rng));
    (weights, window, target, masks)
}

/// Largest relative error between analytic and central-difference gradients.
pub fn gradient_check(
    weights: &ModelWeights,
    window: &[f64],
    target: usize,
    masks: &Option<DropoutMasks>,
    eps: f64,
    floor: f64,
) -> f64 {
    let (_, analytic) =
        scorelstm::neural::window_gradient(weights, window, target, masks.clone()).unwrap();
    let numeric = numeric_gradient(weights, window, target, masks, eps);
    analytic
        .slices()
        .iter()
        .zip(&numeric)
        .flat_map(|(a, n)| a.iter().zip(n).map(|(&a, &n)| relative_error(a, n, floor)))
        .fold(0.0, f64::max)
}
