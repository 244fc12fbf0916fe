//! Token streams, the token vocabulary and fixed-length training windows.

mod extract;
mod vocab;
mod window;

use std::fmt;

use thiserror::Error;

use crate::score::{
    format_quarter_length, parse_quarter_length, NoteEvent, Pitch, QuarterLength, ScoreError,
};

pub use extract::{extract_horizontal, extract_vertical};
pub use vocab::{read_vocabulary, write_vocabulary, Vocabulary};
pub use window::{make_windows, normalize, normalize_index, Window, WindowDataset};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("unknown instrument {requested:?}; available: {}", available.join(", "))]
    UnknownInstrument {
        requested: String,
        available: Vec<String>,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("need at least {required} tokens for sequence length {sequence_length}, have {available}")]
    InsufficientData {
        required: usize,
        available: usize,
        sequence_length: usize,
    },
    #[error("sequence length must be at least 1")]
    ZeroSequenceLength,
    #[error("encoded index {index} out of range for vocabulary of size {size}")]
    CorruptEncoding { index: usize, size: usize },
    #[error("token {0} is not in the vocabulary")]
    UnknownToken(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Pitch(#[from] ScoreError),
}

pub const REST: &str = "rest";

/// The training unit: a sound spelling, its duration and, for multi-part
/// corpora, the instrument playing it.
///
/// The derived ordering compares `(name, duration, instrument)` and is the
/// ordering vocabulary indices are assigned in.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token {
    pub name: String,
    pub duration: QuarterLength,
    pub instrument: Option<String>,
}

/// Decoded form of a token name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sound {
    Rest,
    /// One entry for a note, several (ascending MIDI) for a chord.
    Pitched(Vec<Pitch>),
}

impl Sound {
    pub fn spelling(&self) -> String {
        match self {
            Sound::Rest => REST.to_owned(),
            Sound::Pitched(p) => p.iter().map(ToString::to_string).collect::<Vec<_>>().join("."),
        }
    }

    pub fn pitches(&self) -> &[Pitch] {
        match self {
            Sound::Rest => &[],
            Sound::Pitched(p) => p,
        }
    }
}

impl Token {
    pub fn new(name: impl Into<String>, duration: QuarterLength, instrument: Option<String>) -> Self {
        Self {
            name: name.into(),
            duration,
            instrument,
        }
    }

    pub fn from_sound(sound: &Sound, duration: QuarterLength, instrument: Option<String>) -> Self {
        Self::new(sound.spelling(), duration, instrument)
    }

    /// Spells an event: `rest`, a pitch such as `Eb4`, or a chord such as
    /// `C4.E4.G4` (ascending MIDI, unisons collapsed).
    pub fn from_event(event: &NoteEvent, instrument: Option<String>) -> Self {
        let mut pitches = event.pitches.clone();
        pitches.sort_by_key(Pitch::midi);
        pitches.dedup_by_key(|p| p.midi());
        let sound = if pitches.is_empty() {
            Sound::Rest
        } else {
            Sound::Pitched(pitches)
        };
        Self::from_sound(&sound, event.duration, instrument)
    }

    pub fn sound(&self) -> Result<Sound, CorpusError> {
        if self.name == REST {
            return Ok(Sound::Rest);
        }
        let pitches = self
            .name
            .split('.')
            .map(str::parse::<Pitch>)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Sound::Pitched(pitches))
    }

    pub fn is_rest(&self) -> bool {
        self.name == REST
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}", self.name, format_quarter_length(self.duration))?;
        if let Some(i) = &self.instrument {
            write!(f, ", {i}")?;
        }
        f.write_str(")")
    }
}

fn token_fields(t: &Token) -> String {
    let mut line = format!("{}\t{}", t.name, format_quarter_length(t.duration));
    if let Some(i) = &t.instrument {
        line.push('\t');
        line.push_str(i);
    }
    line
}

fn parse_token_fields(fields: &[&str], line: usize) -> Result<Token, CorpusError> {
    let err = |message: String| CorpusError::Format { line, message };
    let (name, duration, instrument) = match fields {
        [n, d] => (*n, *d, None),
        [n, d, i] => (*n, *d, Some((*i).to_owned())),
        _ => return Err(err(format!("expected 2 or 3 fields, found {}", fields.len()))),
    };
    let duration = parse_quarter_length(duration)
        .filter(|d| *d > QuarterLength::from_integer(0))
        .ok_or_else(|| err(format!("invalid duration {duration:?}")))?;
    let token = Token::new(name, duration, instrument);
    token.sound().map_err(|e| err(e.to_string()))?;
    Ok(token)
}

/// One `name<TAB>duration[<TAB>instrument]` line per token.
pub fn write_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for t in tokens {
        out.push_str(&token_fields(t));
        out.push('\n');
    }
    out
}

pub fn read_tokens(text: &str) -> Result<Vec<Token>, CorpusError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_token_fields(&l.split('\t').collect::<Vec<_>>(), i + 1))
        .collect()
}
