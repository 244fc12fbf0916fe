//! Python bindings for `scorelstm`, built as the `pyscorelstm` extension module.
//!
//! Durations cross the boundary as strings (`"1/3"`, `"1.5"`) or numbers;
//! they are returned as exact `"n/d"` strings.

use pyo3::create_exception;
use pyo3::exceptions::{PyIndexError, PyTypeError, PyValueError};
use pyo3::prelude::*;

use scorelstm::corpus::{
    extract_horizontal, extract_vertical, make_windows, normalize, read_tokens, read_vocabulary,
    write_tokens, write_vocabulary, Token, Vocabulary, WindowDataset,
};
use scorelstm::generator::{
    assemble_score, generate as run_generation, major_scale, select_seed, GenerationConstraints,
    ScoreFrame,
};
use scorelstm::neural::{
    decode_weights, encode_weights, forward, load_weights, save_weights, train as run_training,
    Mode, ModelConfig, ModelWeights, Optimizer, TrainConfig,
};
use scorelstm::rng::{stream, Stream};
use scorelstm::score::{
    format_quarter_length, parse_quarter_length, parse_score as parse_bytes, write_midi,
    write_musicxml, QuarterLength, Score, ScoreFormat, TimeSignature,
};

create_exception!(pyscorelstm, ScoreLstmError, PyValueError);

fn err(e: impl std::fmt::Display) -> PyErr {
    ScoreLstmError::new_err(e.to_string())
}

fn duration_arg(value: &Bound<'_, PyAny>) -> PyResult<QuarterLength> {
    let text = if let Ok(s) = value.extract::<String>() {
        s
    } else if let Ok(i) = value.extract::<i64>() {
        i.to_string()
    } else if let Ok(f) = value.extract::<f64>() {
        f.to_string()
    } else {
        return Err(PyTypeError::new_err("duration must be a str, int or float"));
    };
    parse_quarter_length(&text)
        .ok_or_else(|| PyValueError::new_err(format!("not a duration: {text:?}")))
}

/// One event: pitch spelling (or `"rest"`), duration and optional instrument.
#[pyclass(name = "Token", module = "pyscorelstm", frozen, eq, hash, ord, from_py_object)]
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PyToken(Token);

#[pymethods]
impl PyToken {
    #[new]
    #[pyo3(signature = (name, duration, instrument=None))]
    fn new(name: String, duration: &Bound<'_, PyAny>, instrument: Option<String>) -> PyResult<Self> {
        let token = Token::new(name, duration_arg(duration)?, instrument);
        token.sound().map_err(err)?;
        Ok(Self(token))
    }

    #[getter]
    fn name(&self) -> &str {
        &self.0.name
    }

    /// Exact duration in quarter notes, as `"n"` or `"n/d"`.
    #[getter]
    fn duration(&self) -> String {
        format_quarter_length(self.0.duration)
    }

    #[getter]
    fn quarter_length(&self) -> f64 {
        *self.0.duration.numer() as f64 / *self.0.duration.denom() as f64
    }

    #[getter]
    fn instrument(&self) -> Option<&str> {
        self.0.instrument.as_deref()
    }

    fn is_rest(&self) -> bool {
        self.0.is_rest()
    }

    fn __str__(&self) -> String {
        self.0.to_string()
    }

    fn __repr__(&self) -> String {
        format!("Token{}", self.0)
    }
}

fn wrap_tokens(tokens: Vec<Token>) -> Vec<PyToken> {
    tokens.into_iter().map(PyToken).collect()
}

fn unwrap_tokens(tokens: Vec<PyRef<'_, PyToken>>) -> Vec<Token> {
    tokens.iter().map(|t| t.0.clone()).collect()
}

/// A parsed or generated score.
#[pyclass(name = "Score", module = "pyscorelstm")]
pub struct PyScore {
    inner: Score,
    #[pyo3(get)]
    warnings: Vec<String>,
}

#[pymethods]
impl PyScore {
    /// Parses MusicXML text or a compressed `.mxl` archive.
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        let parsed = parse_bytes(data, ScoreFormat::detect(data)).map_err(err)?;
        Ok(Self {
            inner: parsed.score,
            warnings: parsed.warnings,
        })
    }

    #[staticmethod]
    fn read(path: std::path::PathBuf) -> PyResult<Self> {
        let data = std::fs::read(&path).map_err(|e| err(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&data)
    }

    #[getter]
    fn part_names(&self) -> Vec<String> {
        self.inner.part_names().into_iter().map(str::to_owned).collect()
    }

    #[getter]
    fn key_fifths(&self) -> i8 {
        self.inner.key_fifths
    }

    #[getter]
    fn time_signature(&self) -> String {
        self.inner.time_signature.to_string()
    }

    #[getter]
    fn tempo_bpm(&self) -> Option<u32> {
        self.inner.tempo_bpm
    }

    #[getter]
    fn length(&self) -> String {
        format_quarter_length(self.inner.length())
    }

    /// `(spelling, duration, offset)` for each event of a part.
    fn events(&self, part: usize) -> PyResult<Vec<(String, String, String)>> {
        let part = self
            .inner
            .parts
            .get(part)
            .ok_or_else(|| PyIndexError::new_err("part index out of range"))?;
        Ok(part
            .events
            .iter()
            .map(|e| {
                (
                    Token::from_event(e, None).name,
                    format_quarter_length(e.duration),
                    format_quarter_length(e.offset),
                )
            })
            .collect())
    }

    fn to_musicxml(&self) -> PyResult<Vec<u8>> {
        write_musicxml(&self.inner).map_err(err)
    }

    fn to_midi(&self) -> PyResult<Vec<u8>> {
        write_midi(&self.inner).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "Score(parts={:?}, key_fifths={}, time={}, length={})",
            self.inner.part_names(),
            self.inner.key_fifths,
            self.inner.time_signature,
            format_quarter_length(self.inner.length())
        )
    }
}

/// Sorted set of distinct tokens; a token's index is its position.
#[pyclass(name = "Vocabulary", module = "pyscorelstm", frozen)]
pub struct PyVocabulary(Vocabulary);

#[pymethods]
impl PyVocabulary {
    #[new]
    fn new(tokens: Vec<PyRef<'_, PyToken>>) -> PyResult<Self> {
        Vocabulary::build(&unwrap_tokens(tokens)).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_tsv(text: &str) -> PyResult<Self> {
        read_vocabulary(text).map(Self).map_err(err)
    }

    fn to_tsv(&self) -> String {
        write_vocabulary(&self.0)
    }

    fn encode(&self, token: PyRef<'_, PyToken>) -> PyResult<usize> {
        self.0
            .encode(&token.0)
            .ok_or_else(|| PyValueError::new_err(format!("{} is not in the vocabulary", token.0)))
    }

    fn decode(&self, index: usize) -> PyResult<PyToken> {
        self.0
            .decode(index)
            .map(|t| PyToken(t.clone()))
            .ok_or_else(|| PyIndexError::new_err(format!("no token at index {index}")))
    }

    fn tokens(&self) -> Vec<PyToken> {
        wrap_tokens(self.0.tokens().to_vec())
    }

    fn instruments(&self) -> Vec<String> {
        self.0.instruments()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Stride-1 training windows over an encoded token stream.
#[pyclass(name = "Dataset", module = "pyscorelstm", frozen)]
pub struct PyDataset(WindowDataset);

#[pymethods]
impl PyDataset {
    #[new]
    fn new(
        tokens: Vec<PyRef<'_, PyToken>>,
        vocabulary: &PyVocabulary,
        sequence_length: usize,
    ) -> PyResult<Self> {
        let vocab = &vocabulary.0;
        let encoded = vocab.encode_all(&unwrap_tokens(tokens)).map_err(err)?;
        let windows = make_windows(&encoded, sequence_length).map_err(err)?;
        normalize(windows, vocab.len()).map(Self).map_err(err)
    }

    #[getter]
    fn sequence_length(&self) -> usize {
        self.0.sequence_length
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.0.vocab_size
    }

    /// Input indices and target index of window `i`.
    fn window(&self, i: usize) -> PyResult<(Vec<usize>, usize)> {
        self.0
            .windows
            .get(i)
            .map(|w| (w.input.clone(), w.target))
            .ok_or_else(|| PyIndexError::new_err("window index out of range"))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

/// Stacked LSTM weights with their configuration.
#[pyclass(name = "Model", module = "pyscorelstm")]
pub struct PyModel(ModelWeights);

#[pymethods]
impl PyModel {
    /// Freshly initialized weights.
    #[new]
    #[pyo3(signature = (layers, sequence_length, vocab_size, dropout=0.3, seed=0))]
    fn new(
        layers: Vec<usize>,
        sequence_length: usize,
        vocab_size: usize,
        dropout: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let config = ModelConfig {
            layer_sizes: layers,
            dropout_rate: dropout,
            sequence_length,
            vocab_size,
            rng_seed: seed,
        };
        ModelWeights::init(config).map(Self).map_err(err)
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        decode_weights(data).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        load_weights(path).map(Self).map_err(err)
    }

    fn to_bytes(&self) -> Vec<u8> {
        encode_weights(&self.0)
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        save_weights(&self.0, path).map_err(err)
    }

    #[getter]
    fn layers(&self) -> Vec<usize> {
        self.0.config.layer_sizes.clone()
    }

    #[getter]
    fn dropout(&self) -> f64 {
        self.0.config.dropout_rate
    }

    #[getter]
    fn sequence_length(&self) -> usize {
        self.0.config.sequence_length
    }

    #[getter]
    fn vocab_size(&self) -> usize {
        self.0.config.vocab_size
    }

    fn parameter_count(&self) -> usize {
        self.0.params.len()
    }

    /// Next-token distribution for a window of vocabulary indices.
    fn predict(&self, indices: Vec<usize>) -> PyResult<Vec<f64>> {
        let config = &self.0.config;
        if let Some(&bad) = indices.iter().find(|&&i| i >= config.vocab_size) {
            return Err(PyIndexError::new_err(format!("index {bad} is outside the vocabulary")));
        }
        let window: Vec<f64> = indices
            .iter()
            .map(|&i| i as f64 / config.vocab_size as f64)
            .collect();
        let mut unused = stream(0, Stream::Dropout);
        let probs = forward(&self.0, &window, Mode::Infer, &mut unused).map_err(err)?;
        Ok(probs.to_vec())
    }

    fn __repr__(&self) -> String {
        let c = &self.0.config;
        format!(
            "Model(layers={:?}, dropout={}, sequence_length={}, vocab_size={})",
            c.layer_sizes, c.dropout_rate, c.sequence_length, c.vocab_size
        )
    }
}

/// Parses MusicXML or `.mxl` bytes.
#[pyfunction]
fn parse_score(data: &[u8]) -> PyResult<PyScore> {
    PyScore::from_bytes(data)
}

/// One part as a melodic line; the name match ignores case.
#[pyfunction]
fn horizontal_tokens(score: &PyScore, instrument: &str) -> PyResult<Vec<PyToken>> {
    extract_horizontal(&score.inner, instrument)
        .map(wrap_tokens)
        .map_err(err)
}

/// Several parts interleaved by onset, each token tagged with its instrument.
#[pyfunction]
fn vertical_tokens(score: &PyScore, instruments: Vec<String>) -> PyResult<Vec<PyToken>> {
    let names: Vec<&str> = instruments.iter().map(String::as_str).collect();
    extract_vertical(&score.inner, &names)
        .map(wrap_tokens)
        .map_err(err)
}

#[pyfunction]
fn tokens_to_tsv(tokens: Vec<PyRef<'_, PyToken>>) -> String {
    write_tokens(&unwrap_tokens(tokens))
}

#[pyfunction]
fn tokens_from_tsv(text: &str) -> PyResult<Vec<PyToken>> {
    read_tokens(text).map(wrap_tokens).map_err(err)
}

/// Trains a fresh model and returns it with the mean loss of each epoch.
/// The GIL is released while training runs.
#[pyfunction]
#[pyo3(signature = (
    dataset, layers, dropout=0.3, epochs=50, batch_size=64, learning_rate=1e-3,
    clip_norm=Some(5.0), optimizer="adam", seed=0
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    dataset: &PyDataset,
    layers: Vec<usize>,
    dropout: f64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    clip_norm: Option<f64>,
    optimizer: &str,
    seed: u64,
) -> PyResult<(PyModel, Vec<f64>)> {
    let optimizer = match optimizer.to_ascii_lowercase().as_str() {
        "adam" => Optimizer::adam(),
        "sgd" => Optimizer::Sgd,
        other => return Err(PyValueError::new_err(format!("unknown optimizer {other:?}"))),
    };
    let model_config = ModelConfig {
        layer_sizes: layers,
        dropout_rate: dropout,
        sequence_length: dataset.0.sequence_length,
        vocab_size: dataset.0.vocab_size,
        rng_seed: seed,
    };
    let train_config = TrainConfig {
        epochs,
        batch_size,
        learning_rate,
        gradient_clip_norm: clip_norm,
        optimizer,
        rng_seed: seed,
    };
    let data = &dataset.0;
    let outcome = py
        .detach(|| run_training(data, &model_config, &train_config))
        .map_err(err)?;
    Ok((PyModel(outcome.weights), outcome.history))
}

/// Generates tokens from a seed window drawn from `dataset`, applying the
/// duration floor, scale filter, octave rule and rest merging.
#[pyfunction]
#[pyo3(signature = (
    model, vocabulary, dataset, target_duration=None, key_fifths=-3, scale_filter=true,
    rest_merge=true, min_duration=None, octave_span=12, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn generate(
    model: &PyModel,
    vocabulary: &PyVocabulary,
    dataset: &PyDataset,
    target_duration: Option<&Bound<'_, PyAny>>,
    key_fifths: i8,
    scale_filter: bool,
    rest_merge: bool,
    min_duration: Option<&Bound<'_, PyAny>>,
    octave_span: u32,
    seed: u64,
) -> PyResult<Vec<PyToken>> {
    let defaults = GenerationConstraints::default();
    let constraints = GenerationConstraints {
        min_duration: min_duration.map(duration_arg).transpose()?.unwrap_or(defaults.min_duration),
        scale_pitch_classes: major_scale(key_fifths),
        enforce_scale: scale_filter,
        octave_span_semitones: octave_span,
        merge_rests: rest_merge,
        target_duration: target_duration
            .map(duration_arg)
            .transpose()?
            .unwrap_or(defaults.target_duration),
    };
    let pattern = select_seed(&dataset.0, &mut stream(seed, Stream::SeedSelection)).map_err(err)?;
    let generation = run_generation(&model.0, &vocabulary.0, pattern, &constraints).map_err(err)?;
    Ok(wrap_tokens(generation.tokens))
}

/// Lays tokens out as a score, one part per `layout` entry.
#[pyfunction]
#[pyo3(signature = (tokens, layout=Vec::new(), key_fifths=-3, time="6/8", tempo=None))]
fn tokens_to_score(
    tokens: Vec<PyRef<'_, PyToken>>,
    layout: Vec<String>,
    key_fifths: i8,
    time: &str,
    tempo: Option<u32>,
) -> PyResult<PyScore> {
    let time_signature: TimeSignature = time.parse().map_err(PyValueError::new_err)?;
    let frame = ScoreFrame {
        key_fifths,
        time_signature,
        tempo_bpm: tempo,
    };
    let score = assemble_score(&unwrap_tokens(tokens), &layout, frame).map_err(err)?;
    Ok(PyScore {
        inner: score,
        warnings: Vec::new(),
    })
}

/// Pitch classes of the major scale with `key_fifths` sharps (negative: flats).
#[pyfunction]
fn scale_pitch_classes(key_fifths: i8) -> Vec<u8> {
    major_scale(key_fifths).into_iter().collect()
}

#[pymodule]
fn pyscorelstm(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ScoreLstmError", m.py().get_type::<ScoreLstmError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyToken>()?;
    m.add_class::<PyScore>()?;
    m.add_class::<PyVocabulary>()?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(parse_score, m)?)?;
    m.add_function(wrap_pyfunction!(horizontal_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(vertical_tokens, m)?)?;
    m.add_function(wrap_pyfunction!(tokens_to_tsv, m)?)?;
    m.add_function(wrap_pyfunction!(tokens_from_tsv, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(tokens_to_score, m)?)?;
    m.add_function(wrap_pyfunction!(scale_pitch_classes, m)?)?;
    Ok(())
}
