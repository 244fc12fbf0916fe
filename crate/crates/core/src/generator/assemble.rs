use crate::corpus::{Sound, Token};
use crate::score::{NoteEvent, Part, QuarterLength, Score, TimeSignature};

use super::GenerateError;

/// Part name used when the tokens carry no instrument and no layout is given.
pub const DEFAULT_PART_NAME: &str = "Music";

/// Key, metre and tempo stamped on a generated score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScoreFrame {
    pub key_fifths: i8,
    pub time_signature: TimeSignature,
    pub tempo_bpm: Option<u32>,
}

impl Default for ScoreFrame {
    /// Three flats in 6/8.
    fn default() -> Self {
        Self {
            key_fifths: -3,
            time_signature: TimeSignature::new(6, 8),
            tempo_bpm: None,
        }
    }
}

/// Lays tokens out as parts, one per `layout` entry in order. Each part is
/// its own timeline: an event starts where that part's previous event ended.
///
/// Tokens without an instrument go to the first part; an empty layout gives
/// a single part named [`DEFAULT_PART_NAME`].
pub fn assemble_score(
    tokens: &[Token],
    layout: &[String],
    frame: ScoreFrame,
) -> Result<Score, GenerateError> {
    let names: Vec<String> = if layout.is_empty() {
        vec![DEFAULT_PART_NAME.to_owned()]
    } else {
        layout.to_vec()
    };
    let mut parts: Vec<Part> = names
        .iter()
        .map(|name| Part {
            name: name.clone(),
            events: Vec::new(),
        })
        .collect();
    let mut cursor = vec![QuarterLength::from_integer(0); parts.len()];

    for token in tokens {
        let part = match &token.instrument {
            None => 0,
            Some(name) if layout.is_empty() => {
                return Err(GenerateError::UnknownInstrument(name.clone()))
            }
            Some(name) => layout
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| GenerateError::UnknownInstrument(name.clone()))?,
        };
        let pitches = match token.sound()? {
            Sound::Rest => Vec::new(),
            Sound::Pitched(p) => p,
        };
        parts[part]
            .events
            .push(NoteEvent::new(pitches, token.duration, cursor[part], part));
        cursor[part] += token.duration;
    }

    Ok(Score {
        parts,
        key_fifths: frame.key_fifths,
        time_signature: frame.time_signature,
        tempo_bpm: frame.tempo_bpm,
    })
}
