use std::collections::BTreeSet;

use crate::corpus::{Sound, Token, Vocabulary};
use crate::score::QuarterLength;

use super::GenerateError;

/// Pitch classes of E-flat major.
pub const EB_MAJOR: [u8; 7] = [3, 5, 7, 8, 10, 0, 2];

/// Pitch classes of the major key with `key_fifths` sharps (or flats if negative).
pub fn major_scale(key_fifths: i8) -> BTreeSet<u8> {
    let tonic = (7 * key_fifths as i32).rem_euclid(12);
    [0, 2, 4, 5, 7, 9, 11]
        .into_iter()
        .map(|s| ((tonic + s) % 12) as u8)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationConstraints {
    /// Shortest duration a selected token may have (a quaver by default).
    pub min_duration: QuarterLength,
    pub scale_pitch_classes: BTreeSet<u8>,
    pub enforce_scale: bool,
    /// A note further than this from the previous event's top pitch is moved
    /// by whole octaves towards it.
    pub octave_span_semitones: u32,
    pub merge_rests: bool,
    pub target_duration: QuarterLength,
}

impl Default for GenerationConstraints {
    fn default() -> Self {
        Self {
            min_duration: QuarterLength::new(1, 2),
            scale_pitch_classes: EB_MAJOR.into_iter().collect(),
            enforce_scale: true,
            octave_span_semitones: 12,
            merge_rests: true,
            target_duration: QuarterLength::from_integer(48),
        }
    }
}

impl GenerationConstraints {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let zero = QuarterLength::from_integer(0);
        let invalid = |m: &str| Err(GenerateError::InvalidConstraints(m.into()));
        if self.min_duration <= zero {
            return invalid("minimum duration must be positive");
        }
        if self.target_duration <= zero {
            return invalid("target duration must be positive");
        }
        if self.octave_span_semitones == 0 {
            return invalid("octave span must be at least one semitone");
        }
        if self.enforce_scale && self.scale_pitch_classes.is_empty() {
            return invalid("scale filter needs at least one pitch class");
        }
        if self.scale_pitch_classes.iter().any(|&pc| pc >= 12) {
            return invalid("pitch classes must lie in 0..12");
        }
        Ok(())
    }

    fn in_scale(&self, sound: &Sound) -> bool {
        sound
            .pitches()
            .iter()
            .all(|p| self.scale_pitch_classes.contains(&p.pitch_class()))
    }
}

/// How a candidate won the scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Selection {
    /// Met every active filter.
    Preferred,
    /// Nothing in the scale met the duration floor; took the first long-enough token.
    DurationFallback,
    /// Nothing met the duration floor; took the top-ranked token as is.
    Unconstrained,
}

/// Result of constraining one prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Constrained {
    pub token: Token,
    pub candidate: usize,
    pub selection: Selection,
    /// The token is a rest that absorbed the previous rest; replace, don't append.
    pub merged: bool,
    /// Whole octaves the selected note was moved by.
    pub octave_shift: i32,
}

/// First candidate (in ranking order) that passes the duration floor and,
/// when enabled, the scale filter. Rests always pass the scale filter.
pub fn select_candidate(
    candidates: &[(usize, f64)],
    constraints: &GenerationConstraints,
    vocab: &Vocabulary,
) -> Result<(usize, Selection), GenerateError> {
    if candidates.is_empty() || vocab.is_empty() {
        return Err(GenerateError::EmptyVocabulary);
    }
    let mut fallback = None;
    for &(index, _) in candidates {
        let token = vocab.decode(index).ok_or(GenerateError::UnknownIndex(index))?;
        if token.duration < constraints.min_duration {
            continue;
        }
        if !constraints.enforce_scale || constraints.in_scale(&token.sound()?) {
            return Ok((index, Selection::Preferred));
        }
        fallback.get_or_insert(index);
    }
    Ok(match fallback {
        Some(index) => (index, Selection::DurationFallback),
        None => (candidates[0].0, Selection::Unconstrained),
    })
}

/// Octave reduction and rest merging applied to the selected token.
pub(crate) struct PostProcessed {
    pub token: Token,
    pub merged: bool,
    pub octave_shift: i32,
}

pub(crate) fn post_process(
    selected: &Token,
    previous: Option<&Token>,
    constraints: &GenerationConstraints,
) -> Result<PostProcessed, GenerateError> {
    let sound = selected.sound()?;
    let unchanged = PostProcessed {
        token: selected.clone(),
        merged: false,
        octave_shift: 0,
    };
    let Some(previous) = previous else {
        return Ok(unchanged);
    };

    match &sound {
        Sound::Rest if constraints.merge_rests && previous.is_rest() => Ok(PostProcessed {
            token: Token::new(
                selected.name.clone(),
                previous.duration + selected.duration,
                selected.instrument.clone(),
            ),
            merged: true,
            octave_shift: 0,
        }),
        Sound::Pitched(pitches) if pitches.len() == 1 => {
            let Some(anchor) = previous.sound()?.pitches().iter().map(|p| p.midi() as i32).max()
            else {
                return Ok(unchanged);
            };
            let note = pitches[0];
            let span = constraints.octave_span_semitones as i32;
            if (note.midi() as i32 - anchor).abs() <= span {
                return Ok(unchanged);
            }
            // Ties go to the higher octave: scan from the top down, keep strict improvements.
            let mut best: Option<(i32, i32)> = None;
            for k in (-11..=11).rev() {
                if let Some(p) = note.shifted_octaves(k) {
                    let d = (p.midi() as i32 - anchor).abs();
                    if best.is_none_or(|(_, bd)| d < bd) {
                        best = Some((k, d));
                    }
                }
            }
            let (k, _) = best.expect("the unshifted note is always valid");
            let shifted = note.shifted_octaves(k).expect("checked above");
            Ok(PostProcessed {
                token: Token::from_sound(
                    &Sound::Pitched(vec![shifted]),
                    selected.duration,
                    selected.instrument.clone(),
                ),
                merged: false,
                octave_shift: k,
            })
        }
        _ => Ok(unchanged),
    }
}

/// Selects from `candidates` and applies the octave and rest rules against
/// `previous`, the last event emitted in the same part.
pub fn apply_constraints(
    candidates: &[(usize, f64)],
    previous: Option<&Token>,
    constraints: &GenerationConstraints,
    vocab: &Vocabulary,
) -> Result<Constrained, GenerateError> {
    let (candidate, selection) = select_candidate(candidates, constraints, vocab)?;
    let token = vocab.decode(candidate).ok_or(GenerateError::UnknownIndex(candidate))?;
    let post = post_process(token, previous, constraints)?;
    Ok(Constrained {
        token: post.token,
        candidate,
        selection,
        merged: post.merged,
        octave_shift: post.octave_shift,
    })
}
