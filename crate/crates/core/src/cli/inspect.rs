use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::{read_tokens, read_vocabulary, Token};
use crate::generator::major_scale;
use crate::neural::{summarize_weights, MAGIC};
use crate::score::{format_quarter_length, parse_score, NoteEvent, QuarterLength, Score, ScoreFormat};

use super::CliError;

const SAMPLE_ENTRIES: usize = 5;
const MAJOR_KEYS: [&str; 15] = [
    "Cb", "Gb", "Db", "Ab", "Eb", "Bb", "F", "C", "G", "D", "A", "E", "B", "F#", "C#",
];

/// Human-readable summary of a weight file, score, vocabulary or token file,
/// recognized by content rather than extension.
pub fn inspect(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        return weights_report(&bytes).map_err(|e| e.at(path));
    }
    let format = ScoreFormat::detect(&bytes);
    if format == ScoreFormat::Mxl {
        return score_report(&bytes, format).map_err(|e| e.at(path));
    }
    let unknown = || CliError::usage(format!("{}: unrecognized file format", path.display()));
    let text = std::str::from_utf8(&bytes).map_err(|_| unknown())?;
    let body = text.trim_start_matches('\u{feff}').trim_start();
    if body.starts_with('<') {
        return score_report(&bytes, format).map_err(|e| e.at(path));
    }
    let first = body.lines().next().ok_or_else(unknown)?;
    let fields: Vec<&str> = first.split('\t').collect();
    if (3..=4).contains(&fields.len()) && fields[0].parse::<usize>().is_ok() {
        return vocab_report(text).map_err(|e| e.at(path));
    }
    if read_tokens(first).is_ok() {
        return tokens_report(text).map_err(|e| e.at(path));
    }
    Err(unknown())
}

fn weights_report(bytes: &[u8]) -> Result<String, CliError> {
    let summary = summarize_weights(bytes)?;
    let config = &summary.header.config;
    let mut out = String::new();
    writeln!(out, "weight file, format version {}", summary.version).unwrap();
    writeln!(
        out,
        "layers: {:?}, dropout {}, sequence length {}, vocabulary {}",
        config.layer_sizes, config.dropout_rate, config.sequence_length, config.vocab_size
    )
    .unwrap();
    writeln!(
        out,
        "input [{}, 1] -> output [{}]",
        config.sequence_length, config.vocab_size
    )
    .unwrap();
    let mut total = 0;
    for t in &summary.header.tensors {
        total += t.shape.iter().product::<usize>();
        writeln!(out, "  {} {:?}", t.name, t.shape).unwrap();
    }
    writeln!(out, "parameters: {total}").unwrap();
    let crc = match summary.stored_crc {
        Some(s) if summary.crc_ok() => format!("ok ({s:08x})"),
        Some(s) => format!("MISMATCH (stored {s:08x}, computed {:08x})", summary.computed_crc),
        None => "MISSING (file truncated or padded)".to_owned(),
    };
    writeln!(out, "crc32: {crc}").unwrap();
    Ok(out)
}

fn vocab_report(text: &str) -> Result<String, CliError> {
    let vocab = read_vocabulary(text)?;
    let mut out = String::new();
    writeln!(out, "vocabulary: {} entries", vocab.len()).unwrap();
    let instruments = vocab.instruments();
    if !instruments.is_empty() {
        writeln!(out, "instruments: {}", instruments.join(", ")).unwrap();
    }
    for (i, t) in vocab.tokens().iter().enumerate().take(SAMPLE_ENTRIES) {
        writeln!(out, "  {i}\t{t}").unwrap();
    }
    Ok(out)
}

fn tokens_report(text: &str) -> Result<String, CliError> {
    let tokens = read_tokens(text)?;
    let distinct: BTreeSet<&Token> = tokens.iter().collect();
    let total: QuarterLength = tokens.iter().map(|t| t.duration).sum();
    let mut out = String::new();
    writeln!(out, "token stream: {} tokens, {} distinct", tokens.len(), distinct.len()).unwrap();
    writeln!(out, "total duration: {} quarter notes", format_quarter_length(total)).unwrap();
    if let Some(min) = tokens.iter().map(|t| t.duration).min() {
        writeln!(out, "min duration: {}", format_quarter_length(min)).unwrap();
    }
    let instruments: BTreeSet<&str> = tokens.iter().filter_map(|t| t.instrument.as_deref()).collect();
    if !instruments.is_empty() {
        writeln!(out, "instruments: {}", instruments.into_iter().collect::<Vec<_>>().join(", ")).unwrap();
    }
    Ok(out)
}

/// Events of a part with rests that were split at a barline joined back up.
fn logical_events(events: &[NoteEvent], measure: QuarterLength) -> Vec<NoteEvent> {
    let mut sorted: Vec<&NoteEvent> = events.iter().collect();
    sorted.sort_by_key(|e| e.offset);
    let mut out: Vec<NoteEvent> = Vec::new();
    for e in sorted {
        if let Some(last) = out.last_mut() {
            let at_barline = (e.offset / measure).is_integer();
            if last.pitches.is_empty() && e.pitches.is_empty() && last.end() == e.offset && at_barline {
                last.duration += e.duration;
                continue;
            }
        }
        out.push(e.clone());
    }
    out
}

/// Counts of constraint breaches in a score, relative to the major scale of
/// its key signature.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScoreScan {
    pub min_duration: Option<QuarterLength>,
    pub out_of_scale: usize,
    pub consecutive_rests: usize,
    /// Single notes more than an octave from the previous event's top pitch.
    pub wide_leaps: usize,
}

pub fn scan_score(score: &Score) -> ScoreScan {
    let scale = major_scale(score.key_fifths);
    let measure = score.time_signature.measure_length();
    let mut scan = ScoreScan::default();
    for part in &score.parts {
        let events = logical_events(&part.events, measure);
        for (i, e) in events.iter().enumerate() {
            scan.min_duration = Some(scan.min_duration.map_or(e.duration, |m| m.min(e.duration)));
            scan.out_of_scale += e.pitches.iter().filter(|p| !scale.contains(&p.pitch_class())).count();
            let Some(prev) = i.checked_sub(1).map(|j| &events[j]) else {
                continue;
            };
            if prev.pitches.is_empty() && e.pitches.is_empty() {
                scan.consecutive_rests += 1;
            }
            if let (Some(top), [note]) = (prev.highest(), e.pitches.as_slice()) {
                if (note.midi() as i32 - top.midi() as i32).abs() > 12 {
                    scan.wide_leaps += 1;
                }
            }
        }
    }
    scan
}

fn score_report(bytes: &[u8], format: ScoreFormat) -> Result<String, CliError> {
    let parsed = parse_score(bytes, format)?;
    let score = &parsed.score;
    let mut out = String::new();
    let kind = match format {
        ScoreFormat::Mxl => "compressed MusicXML",
        ScoreFormat::MusicXml => "MusicXML",
    };
    writeln!(out, "score ({kind}), {} part(s)", score.parts.len()).unwrap();
    for part in &score.parts {
        let rests = part.events.iter().filter(|e| e.pitches.is_empty()).count();
        let chords = part.events.iter().filter(|e| e.pitches.len() > 1).count();
        writeln!(
            out,
            "  {}: {} events ({} notes, {} chords, {} rests)",
            part.name,
            part.events.len(),
            part.events.len() - rests - chords,
            chords,
            rests
        )
        .unwrap();
    }
    let key = MAJOR_KEYS
        .get((score.key_fifths as i32 + 7) as usize)
        .copied()
        .unwrap_or("?");
    writeln!(out, "key: {} fifths ({key} major)", score.key_fifths).unwrap();
    writeln!(out, "time: {}", score.time_signature).unwrap();
    match score.tempo_bpm {
        Some(t) => writeln!(out, "tempo: {t} bpm").unwrap(),
        None => writeln!(out, "tempo: unspecified").unwrap(),
    }
    writeln!(out, "length: {} quarter notes", format_quarter_length(score.length())).unwrap();

    let scan = scan_score(score);
    let min = scan.min_duration.map_or("-".to_owned(), format_quarter_length);
    writeln!(out, "min duration: {min}").unwrap();
    let pcs: Vec<String> = major_scale(score.key_fifths).iter().map(u8::to_string).collect();
    writeln!(out, "out-of-scale pitches: {} (scale {})", scan.out_of_scale, pcs.join(",")).unwrap();
    writeln!(out, "consecutive rests: {}", scan.consecutive_rests).unwrap();
    writeln!(out, "leaps over an octave: {}", scan.wide_leaps).unwrap();
    for w in &parsed.warnings {
        writeln!(out, "warning: {w}").unwrap();
    }
    Ok(out)
}
