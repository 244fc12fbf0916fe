use std::collections::BTreeMap;
use std::fmt::Write as _;

use roxmltree::{Document, Node};

use super::{
    to_ticks, NoteEvent, ParsedScore, Part, Pitch, QuarterLength, Score, ScoreError, Step,
    TimeSignature, TICKS_PER_QUARTER,
};

fn zero() -> QuarterLength {
    QuarterLength::from_integer(0)
}

/// Parses an uncompressed `score-partwise` document.
pub fn parse_musicxml(text: &str) -> Result<ParsedScore, ScoreError> {
    let opts = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = Document::parse_with_options(text, opts).map_err(|e| {
        let pos = e.pos();
        ScoreError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })?;
    let root = doc.root_element();
    match root.tag_name().name() {
        "score-partwise" => {}
        "score-timewise" => {
            return Err(ScoreError::Unsupported(
                "score-timewise documents are not supported".into(),
            ))
        }
        other => {
            return Err(ScoreError::Structure {
                line: line_of(&doc, root),
                message: format!("expected <score-partwise>, found <{other}>"),
            })
        }
    }

    let mut reader = Reader {
        doc: &doc,
        key_fifths: None,
        time: None,
        tempo: None,
        dropped: BTreeMap::new(),
    };

    let mut declared: Vec<(String, String)> = Vec::new();
    if let Some(list) = child(root, "part-list") {
        for sp in list.children().filter(|n| n.has_tag_name("score-part")) {
            let id = sp.attribute("id").unwrap_or_default().to_owned();
            let name = child(sp, "part-name")
                .and_then(|n| n.text())
                .map(|t| t.trim().to_owned())
                .filter(|t| !t.is_empty())
                .unwrap_or_else(|| id.clone());
            declared.push((id, name));
        }
    }

    let mut parts = Vec::with_capacity(declared.len());
    for (index, (id, name)) in declared.iter().enumerate() {
        let events = match root
            .children()
            .find(|n| n.has_tag_name("part") && n.attribute("id") == Some(id.as_str()))
        {
            Some(node) => reader.read_part(node, index, name)?,
            None => Vec::new(),
        };
        parts.push(Part {
            name: name.clone(),
            events,
        });
    }
    for node in root.children().filter(|n| n.has_tag_name("part")) {
        let id = node.attribute("id").unwrap_or_default();
        if !declared.iter().any(|(d, _)| d == id) {
            *reader
                .dropped
                .entry((id.to_owned(), "part missing from part-list".to_owned()))
                .or_default() += 1;
        }
    }

    let warnings = reader
        .dropped
        .iter()
        .map(|((part, what), n)| format!("part {part:?}: {n} x {what} skipped"))
        .collect();
    Ok(ParsedScore {
        score: Score {
            parts,
            key_fifths: reader.key_fifths.unwrap_or(0),
            time_signature: reader.time.unwrap_or_default(),
            tempo_bpm: reader.tempo,
        },
        warnings,
    })
}

fn child<'a, 'i>(node: Node<'a, 'i>, name: &str) -> Option<Node<'a, 'i>> {
    node.children().find(|n| n.has_tag_name(name))
}

fn line_of(doc: &Document, node: Node) -> u32 {
    doc.text_pos_at(node.range().start).row
}

struct Pending {
    pitches: Vec<Pitch>,
    offset: QuarterLength,
    duration: QuarterLength,
    voice: String,
    tie_start: bool,
    tie_stop: bool,
}

struct Reader<'d, 'i> {
    doc: &'d Document<'i>,
    key_fifths: Option<i8>,
    time: Option<TimeSignature>,
    tempo: Option<u32>,
    dropped: BTreeMap<(String, String), usize>,
}

impl Reader<'_, '_> {
    fn err(&self, node: Node, message: impl Into<String>) -> ScoreError {
        ScoreError::Structure {
            line: line_of(self.doc, node),
            message: message.into(),
        }
    }

    fn drop_element(&mut self, part: &str, what: &str) {
        *self
            .dropped
            .entry((part.to_owned(), what.to_owned()))
            .or_default() += 1;
    }

    fn int_text<T: std::str::FromStr>(&self, node: Node) -> Result<T, ScoreError> {
        node.text()
            .map(str::trim)
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| {
                self.err(
                    node,
                    format!("<{}> must hold an integer", node.tag_name().name()),
                )
            })
    }

    fn read_part(
        &mut self,
        part: Node,
        part_index: usize,
        part_name: &str,
    ) -> Result<Vec<NoteEvent>, ScoreError> {
        let mut divisions: i64 = 1;
        let mut measure_start = zero();
        let mut pending: Vec<Pending> = Vec::new();

        for measure in part.children().filter(|n| n.has_tag_name("measure")) {
            let mut pos = zero();
            let mut furthest = zero();
            for el in measure.children().filter(Node::is_element) {
                match el.tag_name().name() {
                    "attributes" => self.read_attributes(el, &mut divisions)?,
                    "note" => {
                        self.read_note(
                            el,
                            part_name,
                            divisions,
                            measure_start,
                            &mut pos,
                            &mut pending,
                        )?;
                    }
                    "backup" => {
                        let d = self.duration(el, divisions)?;
                        pos = (pos - d).max(zero());
                    }
                    "forward" => {
                        pos += self.duration(el, divisions)?;
                    }
                    "direction" => {
                        if el.descendants().any(|n| n.has_tag_name("dynamics")) {
                            self.drop_element(part_name, "dynamics marking");
                        }
                        self.read_sound(el);
                    }
                    "sound" => self.read_sound(el),
                    "harmony" => self.drop_element(part_name, "harmony symbol"),
                    "figured-bass" => self.drop_element(part_name, "figured bass"),
                    _ => {}
                }
                furthest = furthest.max(pos);
            }
            measure_start += furthest;
        }

        let mut events = merge_ties(pending, part_index);
        events.sort_by_key(|e| e.offset);
        Ok(events)
    }

    fn read_attributes(&mut self, el: Node, divisions: &mut i64) -> Result<(), ScoreError> {
        if let Some(d) = child(el, "divisions") {
            let value: i64 = self.int_text(d)?;
            if value <= 0 {
                return Err(self.err(d, "divisions must be positive"));
            }
            *divisions = value;
        }
        if self.key_fifths.is_none() {
            if let Some(f) = child(el, "key").and_then(|k| child(k, "fifths")) {
                let value: i8 = self.int_text(f)?;
                if !(-7..=7).contains(&value) {
                    return Err(self.err(f, format!("fifths {value} outside -7..=7")));
                }
                self.key_fifths = Some(value);
            }
        }
        if self.time.is_none() {
            if let Some(t) = child(el, "time") {
                if let (Some(b), Some(bt)) = (child(t, "beats"), child(t, "beat-type")) {
                    let beats: u32 = self.int_text(b)?;
                    let beat_type: u32 = self.int_text(bt)?;
                    if beats == 0 || beat_type == 0 {
                        return Err(self.err(t, "time signature terms must be positive"));
                    }
                    self.time = Some(TimeSignature::new(beats, beat_type));
                }
            }
        }
        Ok(())
    }

    fn read_sound(&mut self, el: Node) {
        if self.tempo.is_some() {
            return;
        }
        let sound = if el.has_tag_name("sound") {
            Some(el)
        } else {
            el.descendants().find(|n| n.has_tag_name("sound"))
        };
        if let Some(bpm) = sound
            .and_then(|s| s.attribute("tempo"))
            .and_then(|t| t.trim().parse::<f64>().ok())
            .filter(|t| *t > 0.0)
        {
            self.tempo = Some(bpm.round() as u32);
        }
    }

    fn duration(&self, el: Node, divisions: i64) -> Result<QuarterLength, ScoreError> {
        let d = child(el, "duration")
            .ok_or_else(|| self.err(el, format!("<{}> without <duration>", el.tag_name().name())))?;
        let value: i64 = self.int_text(d)?;
        if value < 0 {
            return Err(self.err(d, "negative duration"));
        }
        Ok(QuarterLength::new(value, divisions))
    }

    fn read_note(
        &mut self,
        el: Node,
        part_name: &str,
        divisions: i64,
        measure_start: QuarterLength,
        pos: &mut QuarterLength,
        pending: &mut Vec<Pending>,
    ) -> Result<(), ScoreError> {
        if child(el, "grace").is_some() {
            self.drop_element(part_name, "grace note");
            return Ok(());
        }
        let is_chord = child(el, "chord").is_some();
        let duration = self.duration(el, divisions)?;

        if let Some(n) = child(el, "notations") {
            for kind in ["ornaments", "articulations", "technical", "fermata", "arpeggiate"] {
                if child(n, kind).is_some() {
                    self.drop_element(part_name, kind);
                }
            }
        }
        if child(el, "lyric").is_some() {
            self.drop_element(part_name, "lyric");
        }

        let skipped = if child(el, "cue").is_some() {
            Some("cue note")
        } else if child(el, "unpitched").is_some() {
            Some("unpitched note")
        } else if duration == zero() {
            Some("zero-length note")
        } else {
            None
        };
        if let Some(what) = skipped {
            self.drop_element(part_name, what);
            if !is_chord {
                *pos += duration;
            }
            return Ok(());
        }

        let pitch = match child(el, "pitch") {
            Some(p) => Some(self.read_pitch(p)?),
            None if child(el, "rest").is_some() => None,
            None => return Err(self.err(el, "<note> has neither <pitch> nor <rest>")),
        };
        let mut tie_start = false;
        let mut tie_stop = false;
        for tie in el.children().filter(|n| n.has_tag_name("tie")) {
            match tie.attribute("type") {
                Some("start") => tie_start = true,
                Some("stop") => tie_stop = true,
                _ => {}
            }
        }

        if is_chord {
            match (pending.last_mut(), pitch) {
                (Some(last), Some(p)) if !last.pitches.is_empty() => {
                    last.pitches.push(p);
                    last.tie_start |= tie_start;
                    last.tie_stop |= tie_stop;
                    return Ok(());
                }
                _ => {
                    self.drop_element(part_name, "chord tone without a pitched head");
                    return Ok(());
                }
            }
        }

        pending.push(Pending {
            pitches: pitch.into_iter().collect(),
            offset: measure_start + *pos,
            duration,
            voice: child(el, "voice")
                .and_then(|v| v.text())
                .unwrap_or("1")
                .trim()
                .to_owned(),
            tie_start,
            tie_stop,
        });
        *pos += duration;
        Ok(())
    }

    fn read_pitch(&self, p: Node) -> Result<Pitch, ScoreError> {
        let step_node = child(p, "step").ok_or_else(|| self.err(p, "<pitch> without <step>"))?;
        let step = step_node
            .text()
            .and_then(|t| t.trim().chars().next())
            .and_then(Step::from_letter)
            .ok_or_else(|| self.err(step_node, "invalid <step>"))?;
        let alter = match child(p, "alter") {
            Some(a) => {
                let raw: f64 = a
                    .text()
                    .and_then(|t| t.trim().parse().ok())
                    .ok_or_else(|| self.err(a, "invalid <alter>"))?;
                if raw.fract() != 0.0 {
                    return Err(self.err(a, format!("microtonal alter {raw} is not supported")));
                }
                raw as i8
            }
            None => 0,
        };
        let octave_node =
            child(p, "octave").ok_or_else(|| self.err(p, "<pitch> without <octave>"))?;
        let octave: i8 = self.int_text(octave_node)?;
        Pitch::new(step, alter, octave).map_err(|e| self.err(p, e.to_string()))
    }
}

fn midi_set(pitches: &[Pitch]) -> Vec<u8> {
    let mut m: Vec<u8> = pitches.iter().map(Pitch::midi).collect();
    m.sort_unstable();
    m
}

/// Folds tie continuations into the event that started the tie.
fn merge_ties(pending: Vec<Pending>, part_index: usize) -> Vec<NoteEvent> {
    let mut out: Vec<(NoteEvent, String)> = Vec::with_capacity(pending.len());
    let mut open: Vec<usize> = Vec::new();

    for p in pending {
        if p.tie_stop && !p.pitches.is_empty() {
            let key = midi_set(&p.pitches);
            let found = open.iter().position(|&j| {
                let (ev, voice) = &out[j];
                *voice == p.voice && ev.end() == p.offset && midi_set(&ev.pitches) == key
            });
            if let Some(slot) = found {
                let j = open[slot];
                out[j].0.duration += p.duration;
                if !p.tie_start {
                    open.remove(slot);
                }
                continue;
            }
        }
        let event = NoteEvent::new(p.pitches, p.duration, p.offset, part_index);
        if p.tie_start && event.kind() != super::EventKind::Rest {
            open.push(out.len());
        }
        out.push((event, p.voice));
    }
    out.into_iter().map(|(e, _)| e).collect()
}

struct Segment<'a> {
    event: &'a NoteEvent,
    start: i64,
    len: i64,
    tie_stop: bool,
    tie_start: bool,
}

fn ticks_of(q: QuarterLength, event: &NoteEvent, what: &str) -> Result<i64, ScoreError> {
    to_ticks(q).ok_or_else(|| ScoreError::Unrepresentable {
        event: describe(event),
        reason: format!(
            "{what} {q} is not a whole number of 1/{TICKS_PER_QUARTER} quarter divisions"
        ),
    })
}

fn describe(e: &NoteEvent) -> String {
    let name = if e.pitches.is_empty() {
        "rest".to_owned()
    } else {
        e.pitches
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(".")
    };
    format!("{name} (duration {}, offset {}, part {})", e.duration, e.offset, e.part_index)
}

fn note_type(len: i64) -> Option<(&'static str, usize)> {
    const TYPES: [(i64, &str); 7] = [
        (1920, "whole"),
        (960, "half"),
        (480, "quarter"),
        (240, "eighth"),
        (120, "16th"),
        (60, "32nd"),
        (30, "64th"),
    ];
    for (base, name) in TYPES {
        if len == base {
            return Some((name, 0));
        }
        if len * 2 == base * 3 {
            return Some((name, 1));
        }
        if len * 4 == base * 7 {
            return Some((name, 2));
        }
    }
    None
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Serializes to an uncompressed MusicXML 3.1 partwise document at 480
/// divisions per quarter. Notes crossing a barline are split and tied;
/// rests crossing a barline are split into separate rests.
pub fn write_musicxml(score: &Score) -> Result<Vec<u8>, ScoreError> {
    let measure_q = score.time_signature.measure_length();
    let measure_len = to_ticks(measure_q).ok_or_else(|| {
        ScoreError::Unsupported(format!(
            "time signature {} has no whole-division measure length",
            score.time_signature
        ))
    })?;
    if measure_len <= 0 {
        return Err(ScoreError::Unsupported("empty measure length".into()));
    }

    let mut per_part: Vec<Vec<Vec<Segment>>> = Vec::with_capacity(score.parts.len());
    let mut end = 0i64;
    for part in &score.parts {
        let mut segments: Vec<Vec<Segment>> = Vec::new();
        for event in &part.events {
            let mut start = ticks_of(event.offset, event, "offset")?;
            let len = ticks_of(event.duration, event, "duration")?;
            if len <= 0 || start < 0 {
                return Err(ScoreError::Unrepresentable {
                    event: describe(event),
                    reason: "duration must be positive and offset non-negative".into(),
                });
            }
            let stop = start + len;
            end = end.max(stop);
            let mut first = true;
            while start < stop {
                let measure = (start / measure_len) as usize;
                let boundary = (measure as i64 + 1) * measure_len;
                let piece_end = stop.min(boundary);
                if segments.len() <= measure {
                    segments.resize_with(measure + 1, Vec::new);
                }
                segments[measure].push(Segment {
                    event,
                    start: start - measure as i64 * measure_len,
                    len: piece_end - start,
                    tie_stop: !first,
                    tie_start: piece_end < stop,
                });
                first = false;
                start = piece_end;
            }
        }
        per_part.push(segments);
    }
    let measures = ((end + measure_len - 1) / measure_len).max(1) as usize;

    let mut x = String::new();
    x.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"no\"?>\n");
    x.push_str("<!DOCTYPE score-partwise PUBLIC \"-//Recordare//DTD MusicXML 3.1 Partwise//EN\" \"http://www.musicxml.org/dtds/partwise.dtd\">\n");
    x.push_str("<score-partwise version=\"3.1\">\n  <part-list>\n");
    for (i, part) in score.parts.iter().enumerate() {
        let _ = writeln!(
            x,
            "    <score-part id=\"P{}\">\n      <part-name>{}</part-name>\n    </score-part>",
            i + 1,
            escape(&part.name)
        );
    }
    x.push_str("  </part-list>\n");

    for (i, segments) in per_part.iter().enumerate() {
        let _ = writeln!(x, "  <part id=\"P{}\">", i + 1);
        for m in 0..measures {
            let _ = writeln!(x, "    <measure number=\"{}\">", m + 1);
            if m == 0 {
                let _ = writeln!(
                    x,
                    "      <attributes>\n        <divisions>{TICKS_PER_QUARTER}</divisions>\n        <key>\n          <fifths>{}</fifths>\n          <mode>major</mode>\n        </key>\n        <time>\n          <beats>{}</beats>\n          <beat-type>{}</beat-type>\n        </time>\n      </attributes>",
                    score.key_fifths, score.time_signature.numerator, score.time_signature.denominator
                );
                if let (0, Some(bpm)) = (i, score.tempo_bpm) {
                    let _ = writeln!(
                        x,
                        "      <direction placement=\"above\">\n        <direction-type>\n          <metronome>\n            <beat-unit>quarter</beat-unit>\n            <per-minute>{bpm}</per-minute>\n          </metronome>\n        </direction-type>\n        <sound tempo=\"{bpm}\"/>\n      </direction>"
                    );
                }
            }
            let mut cursor = 0i64;
            for seg in segments.get(m).map(Vec::as_slice).unwrap_or_default() {
                if seg.start > cursor {
                    write_move(&mut x, "forward", seg.start - cursor);
                } else if seg.start < cursor {
                    write_move(&mut x, "backup", cursor - seg.start);
                }
                write_segment(&mut x, seg);
                cursor = seg.start + seg.len;
            }
            if cursor < measure_len {
                write_move(&mut x, "forward", measure_len - cursor);
            }
            x.push_str("    </measure>\n");
        }
        x.push_str("  </part>\n");
    }
    x.push_str("</score-partwise>\n");
    Ok(x.into_bytes())
}

fn write_move(x: &mut String, tag: &str, len: i64) {
    let _ = writeln!(x, "      <{tag}>\n        <duration>{len}</duration>\n      </{tag}>");
}

fn write_segment(x: &mut String, seg: &Segment) {
    let ty = note_type(seg.len);
    if seg.event.pitches.is_empty() {
        x.push_str("      <note>\n        <rest/>\n");
        let _ = writeln!(x, "        <duration>{}</duration>", seg.len);
        write_tail(x, ty, false, false);
        x.push_str("      </note>\n");
        return;
    }
    for (k, p) in seg.event.pitches.iter().enumerate() {
        x.push_str("      <note>\n");
        if k > 0 {
            x.push_str("        <chord/>\n");
        }
        let _ = write!(x, "        <pitch>\n          <step>{}</step>\n", p.step().letter());
        if p.alter() != 0 {
            let _ = writeln!(x, "          <alter>{}</alter>", p.alter());
        }
        let _ = writeln!(x, "          <octave>{}</octave>\n        </pitch>", p.octave());
        let _ = writeln!(x, "        <duration>{}</duration>", seg.len);
        if seg.tie_stop {
            x.push_str("        <tie type=\"stop\"/>\n");
        }
        if seg.tie_start {
            x.push_str("        <tie type=\"start\"/>\n");
        }
        write_tail(x, ty, seg.tie_stop, seg.tie_start);
        x.push_str("      </note>\n");
    }
}

fn write_tail(x: &mut String, ty: Option<(&str, usize)>, tie_stop: bool, tie_start: bool) {
    x.push_str("        <voice>1</voice>\n");
    if let Some((name, dots)) = ty {
        let _ = writeln!(x, "        <type>{name}</type>");
        for _ in 0..dots {
            x.push_str("        <dot/>\n");
        }
    }
    if tie_stop || tie_start {
        x.push_str("        <notations>\n");
        if tie_stop {
            x.push_str("          <tied type=\"stop\"/>\n");
        }
        if tie_start {
            x.push_str("          <tied type=\"start\"/>\n");
        }
        x.push_str("        </notations>\n");
    }
}
