//! The `scorelstm` command line: `ingest`, `train`, `generate`, `inspect`.
//!
//! Exit codes: 0 success, 2 usage or validation, 3 bad or insufficient
//! data, 4 shape or compatibility mismatch, 5 numeric failure.

mod commands;
mod inspect;
mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::corpus::CorpusError;
use crate::generator::GenerateError;
use crate::neural::NeuralError;
use crate::score::{parse_quarter_length, QuarterLength, ScoreError, TimeSignature};

pub use commands::{generate, ingest, train};
pub use inspect::{inspect, scan_score, ScoreScan};
pub use manifest::{sha256_hex, RunManifest};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_SHAPE: u8 = 4;
pub const EXIT_NUMERIC: u8 = 5;

#[derive(Debug, Parser)]
#[command(name = "scorelstm", version, about = "Train an LSTM on scores and generate new ones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tokenize scores into a dataset directory.
    Ingest(IngestArgs),
    /// Train a model on an ingested dataset.
    Train(TrainArgs),
    /// Generate a score as MusicXML and MIDI.
    Generate(GenerateArgs),
    /// Summarize a token, vocabulary, weight or score file.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractMode {
    /// One part as a single melodic line.
    Horizontal,
    /// Several parts interleaved by onset, tagged with their instrument.
    Vertical,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    /// MusicXML (.musicxml, .xml) or compressed (.mxl) scores.
    #[arg(required = true)]
    pub scores: Vec<PathBuf>,
    /// Part name to extract; repeat for vertical mode.
    #[arg(long = "instrument", short, required = true)]
    pub instruments: Vec<String>,
    #[arg(long, value_enum, default_value = "horizontal")]
    pub mode: ExtractMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Directory written by `ingest`.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Weight file to write; the loss log and manifest go next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 32)]
    pub sequence_length: usize,
    #[arg(long, value_delimiter = ',', default_value = "256,256,256")]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = 0.3)]
    pub dropout: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip_norm: f64,
    /// Disable gradient clipping.
    #[arg(long)]
    pub no_clip: bool,
    #[arg(long, value_enum, default_value = "adam")]
    pub optimizer: OptimizerKind,
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub weights: PathBuf,
    /// Directory written by `ingest`; seeds are drawn from its windows.
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output path without extension; `.musicxml`, `.mid` and `.manifest.json` are added.
    #[arg(long)]
    pub out: PathBuf,
    /// Stop after the event that reaches this many quarter notes.
    #[arg(long, default_value = "48", value_parser = quarter_length_arg)]
    pub target_duration: QuarterLength,
    /// Key signature; the scale filter uses its major scale.
    #[arg(long, default_value_t = -3, allow_hyphen_values = true)]
    pub key_fifths: i8,
    #[arg(long, default_value = "6/8", value_parser = time_arg)]
    pub time: TimeSignature,
    #[arg(long)]
    pub tempo: Option<u32>,
    #[arg(long)]
    pub no_scale_filter: bool,
    #[arg(long)]
    pub no_rest_merge: bool,
    #[arg(long, default_value = "1/2", value_parser = quarter_length_arg)]
    pub min_duration: QuarterLength,
    #[arg(long, default_value_t = 12)]
    pub octave_span: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct InspectArgs {
    pub path: PathBuf,
}

fn quarter_length_arg(s: &str) -> Result<QuarterLength, String> {
    parse_quarter_length(s).ok_or_else(|| format!("not a duration: {s:?}"))
}

fn time_arg(s: &str) -> Result<TimeSignature, String> {
    s.parse()
}

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new(EXIT_DATA, format!("{}: {err}", path.display()))
    }

    /// Prefixes the message with the file it concerns.
    pub fn at(self, path: &Path) -> Self {
        Self::new(self.code, format!("{}: {}", path.display(), self.message))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        Self::new(EXIT_DATA, e.to_string())
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        let code = match e {
            CorpusError::UnknownInstrument { .. } | CorpusError::ZeroSequenceLength => EXIT_USAGE,
            _ => EXIT_DATA,
        };
        Self::new(code, e.to_string())
    }
}

impl From<NeuralError> for CliError {
    fn from(e: NeuralError) -> Self {
        let code = match e {
            NeuralError::InvalidConfig(_) => EXIT_USAGE,
            NeuralError::Shape { .. } | NeuralError::Incompatible { .. } => EXIT_SHAPE,
            NeuralError::NonFinite { .. } | NeuralError::Diverged { .. } => EXIT_NUMERIC,
            NeuralError::Checksum(_)
            | NeuralError::Version { .. }
            | NeuralError::Format(_)
            | NeuralError::Io(_) => EXIT_DATA,
        };
        Self::new(code, e.to_string())
    }
}

impl From<GenerateError> for CliError {
    fn from(e: GenerateError) -> Self {
        match e {
            GenerateError::Neural(n) => n.into(),
            GenerateError::Corpus(c) => c.into(),
            GenerateError::Score(s) => s.into(),
            GenerateError::InvalidConstraints(_) => Self::usage(e.to_string()),
            GenerateError::UnknownIndex(_) => Self::new(EXIT_SHAPE, e.to_string()),
            GenerateError::EmptyDataset
            | GenerateError::EmptyVocabulary
            | GenerateError::UnknownInstrument(_) => Self::new(EXIT_DATA, e.to_string()),
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest(a) => ingest(&a),
        Command::Train(a) => train(&a),
        Command::Generate(a) => generate(&a),
        Command::Inspect(a) => {
            print!("{}", inspect(&a.path)?);
            Ok(())
        }
    }
}

/// Entry point of the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
