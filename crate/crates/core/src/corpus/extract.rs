use crate::score::{NoteEvent, Part, Score};

use super::{CorpusError, Token};

fn find_part<'a>(score: &'a Score, name: &str) -> Result<(usize, &'a Part), CorpusError> {
    score
        .parts
        .iter()
        .enumerate()
        .find(|(_, p)| p.name.to_lowercase() == name.to_lowercase())
        .ok_or_else(|| CorpusError::UnknownInstrument {
            requested: name.to_owned(),
            available: score.parts.iter().map(|p| p.name.clone()).collect(),
        })
}

/// Tokens of one part in offset order, without instrument tags.
pub fn extract_horizontal(score: &Score, instrument: &str) -> Result<Vec<Token>, CorpusError> {
    let (_, part) = find_part(score, instrument)?;
    let mut events: Vec<&NoteEvent> = part.events.iter().collect();
    events.sort_by_key(|e| e.offset);
    Ok(events.into_iter().map(|e| Token::from_event(e, None)).collect())
}

/// Interleaves several parts into one time line.
///
/// Events are ordered by offset, then by the position of their part in
/// `instruments`, then by lowest MIDI number (rests first). Offsets are
/// dropped once sorted; each token keeps the part name.
pub fn extract_vertical(score: &Score, instruments: &[&str]) -> Result<Vec<Token>, CorpusError> {
    let mut chosen: Vec<&Part> = Vec::with_capacity(instruments.len());
    for name in instruments {
        let (_, part) = find_part(score, name)?;
        if !chosen.iter().any(|p| std::ptr::eq(*p, part)) {
            chosen.push(part);
        }
    }

    let mut merged: Vec<(usize, &NoteEvent, &str)> = chosen
        .iter()
        .enumerate()
        .flat_map(|(rank, part)| part.events.iter().map(move |e| (rank, e, part.name.as_str())))
        .collect();
    merged.sort_by_key(|(rank, e, _)| (e.offset, *rank, e.pitches.iter().map(|p| p.midi()).min()));

    Ok(merged
        .into_iter()
        .map(|(_, e, name)| Token::from_event(e, Some(name.to_owned())))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::{QuarterLength, TimeSignature};

    fn q(n: i64) -> QuarterLength {
        QuarterLength::from_integer(n)
    }

    fn note(p: &str, dur: i64, off: i64, part: usize) -> NoteEvent {
        NoteEvent::new(vec![p.parse().unwrap()], q(dur), q(off), part)
    }

    fn score(parts: Vec<(&str, Vec<NoteEvent>)>) -> Score {
        Score {
            parts: parts
                .into_iter()
                .map(|(n, events)| Part {
                    name: n.into(),
                    events,
                })
                .collect(),
            key_fifths: 0,
            time_signature: TimeSignature::default(),
            tempo_bpm: None,
        }
    }

    #[test]
    fn instrument_match_is_case_insensitive() {
        let s = score(vec![("Violin", vec![note("E4", 1, 0, 0)])]);
        assert_eq!(extract_horizontal(&s, "violin").unwrap().len(), 1);
        match extract_horizontal(&s, "Viola") {
            Err(CorpusError::UnknownInstrument { available, .. }) => {
                assert_eq!(available, vec!["Violin".to_owned()])
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn single_rest_part() {
        let s = score(vec![("Horn", vec![NoteEvent::rest(q(2), q(0), 0)])]);
        assert_eq!(
            extract_horizontal(&s, "Horn").unwrap(),
            vec![Token::new("rest", q(2), None)]
        );
    }

    #[test]
    fn vertical_with_one_instrument_tags_horizontal() {
        let s = score(vec![(
            "Violin",
            vec![note("E4", 1, 0, 0), note("F4", 1, 1, 0)],
        )]);
        let h = extract_horizontal(&s, "Violin").unwrap();
        let v = extract_vertical(&s, &["Violin"]).unwrap();
        assert_eq!(v.len(), h.len());
        for (a, b) in h.iter().zip(&v) {
            assert_eq!(a.name, b.name);
            assert_eq!(a.duration, b.duration);
            assert_eq!(b.instrument.as_deref(), Some("Violin"));
        }
    }

    #[test]
    fn vertical_empty_request() {
        let s = score(vec![("Violin", vec![note("E4", 1, 0, 0)])]);
        assert!(extract_vertical(&s, &[]).unwrap().is_empty());
    }

    #[test]
    fn vertical_unknown_instrument() {
        let s = score(vec![("Violin", vec![])]);
        assert!(matches!(
            extract_vertical(&s, &["Violin", "Tuba"]),
            Err(CorpusError::UnknownInstrument { .. })
        ));
    }
}
