//! Standard MIDI File (type 1) writer.

use super::{to_ticks, NoteEvent, Score, ScoreError, TICKS_PER_QUARTER};

/// Generated music carries no dynamics, so every note uses one velocity.
pub const VELOCITY: u8 = 64;

const MAX_PARTS: usize = 15;
const PERCUSSION_CHANNEL: u8 = 9;

/// Encodes `score` as an SMF type 1 file: a conductor track with meter, key
/// and tempo, then one track per part on its own channel (skipping channel 10).
pub fn write_midi(score: &Score) -> Result<Vec<u8>, ScoreError> {
    if score.parts.len() > MAX_PARTS {
        return Err(ScoreError::TooManyParts(score.parts.len()));
    }
    let total = to_ticks(score.length()).ok_or_else(|| ScoreError::Unrepresentable {
        event: "score end".into(),
        reason: format!("length {} is not a whole number of ticks", score.length()),
    })?;

    let mut out = Vec::new();
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&((score.parts.len() + 1) as u16).to_be_bytes());
    out.extend_from_slice(&(TICKS_PER_QUARTER as u16).to_be_bytes());

    write_chunk(&mut out, &conductor_track(score, total));
    for (i, part) in score.parts.iter().enumerate() {
        let channel = if (i as u8) < PERCUSSION_CHANNEL { i as u8 } else { i as u8 + 1 };
        write_chunk(&mut out, &part_track(&part.name, &part.events, channel, total)?);
    }
    Ok(out)
}

fn write_chunk(out: &mut Vec<u8>, body: &[u8]) {
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(body);
}

fn write_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 5];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for k in (0..n).rev() {
        out.push(if k > 0 { buf[k] | 0x80 } else { buf[k] });
    }
}

fn end_of_track(out: &mut Vec<u8>, delta: u32) {
    write_vlq(out, delta);
    out.extend_from_slice(&[0xff, 0x2f, 0x00]);
}

fn conductor_track(score: &Score, total: i64) -> Vec<u8> {
    let mut t = Vec::new();
    let ts = score.time_signature;
    write_vlq(&mut t, 0);
    t.extend_from_slice(&[
        0xff,
        0x58,
        0x04,
        ts.numerator as u8,
        ts.denominator.trailing_zeros() as u8,
        24,
        8,
    ]);
    write_vlq(&mut t, 0);
    t.extend_from_slice(&[0xff, 0x59, 0x02, score.key_fifths as u8, 0]);
    if let Some(bpm) = score.tempo_bpm.filter(|b| *b > 0) {
        let usec = 60_000_000 / bpm;
        write_vlq(&mut t, 0);
        t.extend_from_slice(&[0xff, 0x51, 0x03]);
        t.extend_from_slice(&usec.to_be_bytes()[1..]);
    }
    end_of_track(&mut t, total as u32);
    t
}

fn part_track(
    name: &str,
    events: &[NoteEvent],
    channel: u8,
    total: i64,
) -> Result<Vec<u8>, ScoreError> {
    // (tick, 0 = off / 1 = on, key)
    let mut messages: Vec<(i64, u8, u8)> = Vec::new();
    for e in events {
        let ticks = |q| {
            to_ticks(q).ok_or_else(|| ScoreError::Unrepresentable {
                event: format!("event at offset {} in part {name:?}", e.offset),
                reason: "not a whole number of ticks".into(),
            })
        };
        let on = ticks(e.offset)?;
        let off = ticks(e.end())?;
        for p in &e.pitches {
            messages.push((on, 1, p.midi()));
            messages.push((off, 0, p.midi()));
        }
    }
    // Offs before ons at equal ticks so repeated pitches re-articulate.
    messages.sort_by_key(|&(tick, kind, _)| (tick, kind));

    let mut t = Vec::new();
    write_vlq(&mut t, 0);
    t.extend_from_slice(&[0xff, 0x03]);
    write_vlq(&mut t, name.len() as u32);
    t.extend_from_slice(name.as_bytes());

    let mut now = 0i64;
    for (tick, kind, key) in messages {
        write_vlq(&mut t, (tick - now) as u32);
        let status = if kind == 1 { 0x90 } else { 0x80 } | channel;
        t.extend_from_slice(&[status, key, VELOCITY]);
        now = tick;
    }
    end_of_track(&mut t, (total - now) as u32);
    Ok(t)
}
