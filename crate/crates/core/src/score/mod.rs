//! Internal score model plus MusicXML/MXL input and MusicXML/SMF output.
//!
//! Durations and offsets are exact rationals measured in quarter-lengths
//! (1 = one quarter note), so triplets and dotted values survive a round trip
//! through the 480-per-quarter file resolution without drift.

mod midi;
mod musicxml;
mod mxl;

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use thiserror::Error;

pub use midi::write_midi;
pub use musicxml::{parse_musicxml, write_musicxml};
pub use mxl::read_mxl_root;

/// Time measured in quarter notes.
pub type QuarterLength = Rational64;

/// Resolution used by every file we write: MusicXML divisions and MIDI ticks.
pub const TICKS_PER_QUARTER: i64 = 480;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("XML error at line {line}, column {column}: {message}")]
    Xml {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("mxl archive error: {0}")]
    Archive(String),
    #[error("malformed score at line {line}: {message}")]
    Structure { line: u32, message: String },
    #[error("unsupported score: {0}")]
    Unsupported(String),
    #[error("invalid pitch: {0}")]
    InvalidPitch(String),
    #[error("event {event} cannot be written: {reason}")]
    Unrepresentable { event: String, reason: String },
    #[error("MIDI output supports at most 15 parts, score has {0}")]
    TooManyParts(usize),
}

/// Diatonic letter name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Step {
    C,
    D,
    E,
    F,
    G,
    A,
    B,
}

impl Step {
    pub const ALL: [Step; 7] = [Step::C, Step::D, Step::E, Step::F, Step::G, Step::A, Step::B];

    pub fn semitone(self) -> i32 {
        match self {
            Step::C => 0,
            Step::D => 2,
            Step::E => 4,
            Step::F => 5,
            Step::G => 7,
            Step::A => 9,
            Step::B => 11,
        }
    }

    pub fn letter(self) -> char {
        match self {
            Step::C => 'C',
            Step::D => 'D',
            Step::E => 'E',
            Step::F => 'F',
            Step::G => 'G',
            Step::A => 'A',
            Step::B => 'B',
        }
    }

    pub fn from_letter(c: char) -> Option<Step> {
        Some(match c {
            'C' => Step::C,
            'D' => Step::D,
            'E' => Step::E,
            'F' => Step::F,
            'G' => Step::G,
            'A' => Step::A,
            'B' => Step::B,
            _ => return None,
        })
    }
}

/// A spelled pitch in scientific pitch notation (C4 = middle C = MIDI 60).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pitch {
    step: Step,
    alter: i8,
    octave: i8,
}

impl Pitch {
    pub fn new(step: Step, alter: i8, octave: i8) -> Result<Self, ScoreError> {
        if !(-2..=2).contains(&alter) {
            return Err(ScoreError::InvalidPitch(format!(
                "alteration {alter} outside -2..=2"
            )));
        }
        let midi = midi_number(step, alter, octave);
        if !(0..=127).contains(&midi) {
            return Err(ScoreError::InvalidPitch(format!(
                "{}{} octave {octave} maps to MIDI {midi}",
                step.letter(),
                accidental(alter)
            )));
        }
        Ok(Self {
            step,
            alter,
            octave,
        })
    }

    /// Recovers a spelling from a MIDI number given the intended alteration.
    pub fn from_midi(midi: u8, alter: i8) -> Result<Self, ScoreError> {
        let natural = midi as i32 - alter as i32;
        let pc = natural.rem_euclid(12);
        let step = Step::ALL
            .into_iter()
            .find(|s| s.semitone() == pc)
            .ok_or_else(|| {
                ScoreError::InvalidPitch(format!("MIDI {midi} has no spelling with alter {alter}"))
            })?;
        let octave = natural.div_euclid(12) - 1;
        Pitch::new(step, alter, octave as i8)
    }

    pub fn step(&self) -> Step {
        self.step
    }

    pub fn alter(&self) -> i8 {
        self.alter
    }

    pub fn octave(&self) -> i8 {
        self.octave
    }

    pub fn midi(&self) -> u8 {
        midi_number(self.step, self.alter, self.octave) as u8
    }

    pub fn pitch_class(&self) -> u8 {
        self.midi() % 12
    }

    /// Same spelling moved by whole octaves; `None` when it leaves the MIDI range.
    pub fn shifted_octaves(&self, octaves: i32) -> Option<Pitch> {
        let octave = i8::try_from(self.octave as i32 + octaves).ok()?;
        Pitch::new(self.step, self.alter, octave).ok()
    }
}

fn midi_number(step: Step, alter: i8, octave: i8) -> i32 {
    12 * (octave as i32 + 1) + step.semitone() + alter as i32
}

fn accidental(alter: i8) -> &'static str {
    match alter {
        -2 => "bb",
        -1 => "b",
        1 => "#",
        2 => "##",
        _ => "",
    }
}

impl fmt::Display for Pitch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.step.letter(), accidental(self.alter), self.octave)
    }
}

impl FromStr for Pitch {
    type Err = ScoreError;

    /// Parses spellings such as `E4`, `Bb3`, `F#5`, `Cbb-1`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScoreError::InvalidPitch(format!("cannot parse pitch {s:?}"));
        let mut chars = s.chars();
        let step = chars.next().and_then(Step::from_letter).ok_or_else(bad)?;
        let rest = chars.as_str();
        let digits_at = rest
            .find(|c: char| c.is_ascii_digit() || c == '-')
            .ok_or_else(bad)?;
        let (acc, oct) = rest.split_at(digits_at);
        let alter = match acc {
            "" => 0,
            "b" => -1,
            "bb" => -2,
            "#" => 1,
            "##" => 2,
            _ => return Err(bad()),
        };
        let octave: i8 = oct.parse().map_err(|_| bad())?;
        Pitch::new(step, alter, octave)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Note,
    Chord,
    Rest,
}

/// One timed event of a part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoteEvent {
    /// Ascending by MIDI number; empty for a rest.
    pub pitches: Vec<Pitch>,
    pub duration: QuarterLength,
    pub offset: QuarterLength,
    pub part_index: usize,
}

impl NoteEvent {
    pub fn new(
        mut pitches: Vec<Pitch>,
        duration: QuarterLength,
        offset: QuarterLength,
        part_index: usize,
    ) -> Self {
        debug_assert!(duration > QuarterLength::from_integer(0));
        debug_assert!(offset >= QuarterLength::from_integer(0));
        pitches.sort_by_key(|p| p.midi());
        Self {
            pitches,
            duration,
            offset,
            part_index,
        }
    }

    pub fn rest(duration: QuarterLength, offset: QuarterLength, part_index: usize) -> Self {
        Self::new(Vec::new(), duration, offset, part_index)
    }

    pub fn kind(&self) -> EventKind {
        match self.pitches.len() {
            0 => EventKind::Rest,
            1 => EventKind::Note,
            _ => EventKind::Chord,
        }
    }

    pub fn end(&self) -> QuarterLength {
        self.offset + self.duration
    }

    pub fn highest(&self) -> Option<&Pitch> {
        self.pitches.iter().max_by_key(|p| p.midi())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Part {
    pub name: String,
    pub events: Vec<NoteEvent>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeSignature {
    pub numerator: u32,
    pub denominator: u32,
}

impl TimeSignature {
    pub fn new(numerator: u32, denominator: u32) -> Self {
        Self {
            numerator,
            denominator,
        }
    }

    pub fn measure_length(&self) -> QuarterLength {
        QuarterLength::new(4 * self.numerator as i64, self.denominator as i64)
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        Self::new(4, 4)
    }
}

impl fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

impl FromStr for TimeSignature {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (n, d) = s
            .split_once('/')
            .ok_or_else(|| format!("expected n/d, got {s:?}"))?;
        let n: u32 = n.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
        let d: u32 = d.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
        if n == 0 || d == 0 || !d.is_power_of_two() {
            return Err(format!("invalid time signature {s:?}"));
        }
        Ok(Self::new(n, d))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Score {
    pub parts: Vec<Part>,
    /// Sharps (positive) or flats (negative) in the key signature.
    pub key_fifths: i8,
    pub time_signature: TimeSignature,
    pub tempo_bpm: Option<u32>,
}

impl Score {
    pub fn part_names(&self) -> Vec<&str> {
        self.parts.iter().map(|p| p.name.as_str()).collect()
    }

    /// End of the last event over all parts.
    pub fn length(&self) -> QuarterLength {
        self.parts
            .iter()
            .flat_map(|p| p.events.iter().map(NoteEvent::end))
            .max()
            .unwrap_or_else(|| QuarterLength::from_integer(0))
    }
}

/// Input container flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreFormat {
    Mxl,
    MusicXml,
}

impl ScoreFormat {
    /// Zip local-file magic selects mxl; anything else is treated as XML text.
    pub fn detect(bytes: &[u8]) -> Self {
        if bytes.starts_with(b"PK\x03\x04") {
            ScoreFormat::Mxl
        } else {
            ScoreFormat::MusicXml
        }
    }
}

/// A parsed score along with everything that was dropped on the way in.
#[derive(Debug, Clone)]
pub struct ParsedScore {
    pub score: Score,
    pub warnings: Vec<String>,
}

pub fn parse_score(bytes: &[u8], format: ScoreFormat) -> Result<ParsedScore, ScoreError> {
    match format {
        ScoreFormat::MusicXml => {
            let text = std::str::from_utf8(bytes).map_err(|e| ScoreError::Xml {
                line: 0,
                column: 0,
                message: format!("invalid UTF-8 at byte {}", e.valid_up_to()),
            })?;
            parse_musicxml(text)
        }
        ScoreFormat::Mxl => {
            let text = read_mxl_root(bytes)?;
            parse_musicxml(&text)
        }
    }
}

/// Formats a quarter-length as `n` or `n/d`.
pub fn format_quarter_length(q: QuarterLength) -> String {
    if q.is_integer() {
        q.numer().to_string()
    } else {
        format!("{}/{}", q.numer(), q.denom())
    }
}

/// Accepts `n`, `n/d` or a finite decimal such as `1.5`.
pub fn parse_quarter_length(s: &str) -> Option<QuarterLength> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().ok()?;
        let d: i64 = d.trim().parse().ok()?;
        if d == 0 {
            return None;
        }
        return Some(QuarterLength::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let negative = int.starts_with('-');
        let int: i64 = if int.is_empty() || int == "-" { 0 } else { int.parse().ok()? };
        let denom = 10i64.pow(frac.len() as u32);
        let frac: i64 = frac.parse().ok()?;
        let magnitude = int.abs() * denom + frac;
        return Some(QuarterLength::new(
            if negative { -magnitude } else { magnitude },
            denom,
        ));
    }
    s.parse::<i64>().ok().map(QuarterLength::from_integer)
}

/// Converts a quarter-length into whole ticks at [`TICKS_PER_QUARTER`].
pub fn to_ticks(q: QuarterLength) -> Option<i64> {
    let t = q * QuarterLength::from_integer(TICKS_PER_QUARTER);
    t.is_integer().then(|| t.to_integer())
}
