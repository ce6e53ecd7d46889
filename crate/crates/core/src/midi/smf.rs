use std::collections::{BTreeMap, HashMap, VecDeque};

use super::{
    tick_to_seconds, IngestWarning, MidiError, MidiScore, NoteEvent, DEFAULT_TEMPO_US,
    DEFAULT_TICKS_PER_QUARTER,
};

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(data: &'a [u8]) -> Self {
        Cursor { data, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    fn u8(&mut self) -> Option<u8> {
        let b = *self.data.get(self.pos)?;
        self.pos += 1;
        Some(b)
    }

    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.remaining() < n {
            return None;
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Some(s)
    }

    fn u32_be(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Variable-length quantity, at most four bytes.
    fn vlq(&mut self) -> Option<u32> {
        let mut value = 0u32;
        for _ in 0..4 {
            let b = self.u8()?;
            value = (value << 7) | (b & 0x7f) as u32;
            if b & 0x80 == 0 {
                return Some(value);
            }
        }
        None
    }
}

#[derive(Debug)]
enum TrackEvent {
    /// Velocity is discarded: the model infers dynamics itself.
    NoteOn { channel: u8, pitch: u8 },
    NoteOff { channel: u8, pitch: u8 },
    Program { channel: u8, program: u8 },
    Tempo(u32),
    EndOfTrack,
    Other,
}

struct ParsedTrack {
    events: Vec<(u64, TrackEvent)>,
    end_tick: u64,
    saw_end: bool,
}

fn parse_track(track: usize, body: &[u8]) -> Result<ParsedTrack, MidiError> {
    let bad = |reason: &str| MidiError::MalformedTrack {
        track,
        reason: reason.to_string(),
    };
    let mut cur = Cursor::new(body);
    let mut tick = 0u64;
    let mut running: Option<u8> = None;
    let mut events = Vec::new();
    let mut saw_end = false;

    while cur.remaining() > 0 {
        let delta = cur.vlq().ok_or_else(|| bad("truncated delta time"))?;
        tick += delta as u64;
        let first = cur.u8().ok_or_else(|| bad("truncated event"))?;
        let event = match first {
            0xff => {
                let kind = cur.u8().ok_or_else(|| bad("truncated meta event"))?;
                let len = cur.vlq().ok_or_else(|| bad("truncated meta length"))? as usize;
                let data = cur.take(len).ok_or_else(|| bad("meta event overruns track"))?;
                match kind {
                    0x2f => TrackEvent::EndOfTrack,
                    0x51 if len == 3 => {
                        let us = u32::from_be_bytes([0, data[0], data[1], data[2]]);
                        if us == 0 {
                            return Err(bad("zero tempo"));
                        }
                        TrackEvent::Tempo(us)
                    }
                    _ => TrackEvent::Other,
                }
            }
            0xf0 | 0xf7 => {
                let len = cur.vlq().ok_or_else(|| bad("truncated sysex length"))? as usize;
                cur.take(len).ok_or_else(|| bad("sysex overruns track"))?;
                running = None;
                TrackEvent::Other
            }
            0xf1..=0xfe => return Err(bad("system message inside track")),
            _ => {
                let (status, data0) = if first & 0x80 != 0 {
                    running = Some(first);
                    let d = cur.u8().ok_or_else(|| bad("truncated channel message"))?;
                    (first, d)
                } else {
                    let status = running.ok_or_else(|| bad("data byte without running status"))?;
                    (status, first)
                };
                let channel = status & 0x0f;
                let two_bytes = !matches!(status & 0xf0, 0xc0 | 0xd0);
                let data1 = if two_bytes {
                    cur.u8().ok_or_else(|| bad("truncated channel message"))?
                } else {
                    0
                };
                if data0 & 0x80 != 0 || data1 & 0x80 != 0 {
                    return Err(bad("status byte where data byte expected"));
                }
                match status & 0xf0 {
                    0x90 if data1 > 0 => TrackEvent::NoteOn { channel, pitch: data0 },
                    0x90 | 0x80 => TrackEvent::NoteOff {
                        channel,
                        pitch: data0,
                    },
                    0xc0 => TrackEvent::Program {
                        channel,
                        program: data0,
                    },
                    _ => TrackEvent::Other,
                }
            }
        };
        let end = matches!(event, TrackEvent::EndOfTrack);
        events.push((tick, event));
        if end {
            saw_end = true;
            break;
        }
    }
    Ok(ParsedTrack {
        events,
        end_tick: tick,
        saw_end,
    })
}

/// Parses a format 0 or 1 Standard MIDI File.
///
/// Note-ons are paired first-in first-out with note-offs of the same pitch
/// and channel. A note-on left open at the end of its track is closed there
/// and reported in [`MidiScore::warnings`].
pub fn parse_midi(bytes: &[u8]) -> Result<MidiScore, MidiError> {
    let mut cur = Cursor::new(bytes);
    let magic = cur
        .take(4)
        .ok_or_else(|| MidiError::MalformedHeader("file shorter than a chunk header".into()))?;
    if magic != b"MThd" {
        return Err(MidiError::MalformedHeader("missing MThd magic".into()));
    }
    let header_len = cur
        .u32_be()
        .ok_or_else(|| MidiError::MalformedHeader("truncated header length".into()))?
        as usize;
    if header_len < 6 {
        return Err(MidiError::MalformedHeader(format!(
            "header length {header_len} < 6"
        )));
    }
    let header = cur
        .take(header_len)
        .ok_or_else(|| MidiError::MalformedHeader("truncated header chunk".into()))?;
    let format = u16::from_be_bytes([header[0], header[1]]);
    let ntracks = u16::from_be_bytes([header[2], header[3]]);
    let division = u16::from_be_bytes([header[4], header[5]]);
    match format {
        0 | 1 => {}
        other => return Err(MidiError::UnsupportedFormat(other)),
    }
    if division & 0x8000 != 0 {
        return Err(MidiError::UnsupportedDivision(division));
    }
    if division == 0 {
        return Err(MidiError::MalformedHeader("zero ticks per quarter".into()));
    }

    let mut tracks = Vec::new();
    while cur.remaining() >= 8 && tracks.len() < ntracks as usize {
        let kind = cur.take(4).expect("checked length");
        let len = cur.u32_be().expect("checked length") as usize;
        let track_index = tracks.len();
        let body = cur.take(len).ok_or_else(|| MidiError::MalformedTrack {
            track: track_index,
            reason: format!("chunk length {len} overruns file"),
        })?;
        if kind == b"MTrk" {
            tracks.push(parse_track(track_index, body)?);
        }
    }

    let mut warnings = Vec::new();
    let mut tempo_points: BTreeMap<u64, u32> = BTreeMap::new();
    for track in &tracks {
        for (tick, ev) in &track.events {
            if let TrackEvent::Tempo(us) = ev {
                tempo_points.insert(*tick, *us);
            }
        }
    }
    tempo_points.entry(0).or_insert(DEFAULT_TEMPO_US);
    let tempo_map: Vec<(u64, u32)> = tempo_points.into_iter().collect();

    let mut notes = Vec::new();
    let mut max_tick = 0u64;
    for (index, track) in tracks.iter().enumerate() {
        max_tick = max_tick.max(track.end_tick);
        if !track.saw_end {
            warnings.push(IngestWarning::MissingEndOfTrack { track: index });
        }
        let mut programs: [Option<u8>; 16] = [None; 16];
        let mut open: HashMap<(u8, u8), VecDeque<(u64, Option<u8>)>> = HashMap::new();
        let mut spans: Vec<(u64, u64, u8, Option<u8>)> = Vec::new();
        for (tick, ev) in &track.events {
            match *ev {
                TrackEvent::NoteOn { channel, pitch, .. } => {
                    open.entry((channel, pitch))
                        .or_default()
                        .push_back((*tick, programs[channel as usize]));
                }
                TrackEvent::NoteOff { channel, pitch } => {
                    if let Some((start, program)) =
                        open.get_mut(&(channel, pitch)).and_then(|q| q.pop_front())
                    {
                        spans.push((start, *tick, pitch, program));
                    }
                }
                TrackEvent::Program { channel, program } => {
                    programs[channel as usize] = Some(program);
                }
                _ => {}
            }
        }
        let mut dangling: Vec<_> = open
            .into_iter()
            .flat_map(|((channel, pitch), q)| q.into_iter().map(move |o| (channel, pitch, o)))
            .collect();
        dangling.sort_by_key(|&(channel, pitch, (start, _))| (start, channel, pitch));
        for (channel, pitch, (start, program)) in dangling {
            warnings.push(IngestWarning::DanglingNoteOn {
                track: index,
                channel,
                pitch,
            });
            spans.push((start, track.end_tick, pitch, program));
        }
        spans.sort_by_key(|&(start, end, pitch, _)| (start, pitch, end));
        for (start, end, pitch, program) in spans {
            if end <= start {
                warnings.push(IngestWarning::ZeroLengthNote {
                    track: index,
                    pitch,
                });
                continue;
            }
            let onset_s = tick_to_seconds(&tempo_map, division, start);
            let offset_s = tick_to_seconds(&tempo_map, division, end);
            notes.push(NoteEvent {
                pitch,
                onset_s,
                duration_s: offset_s - onset_s,
                track: index,
                program,
            });
        }
    }
    notes.sort_by(|a, b| {
        a.onset_s
            .total_cmp(&b.onset_s)
            .then(a.pitch.cmp(&b.pitch))
            .then(a.track.cmp(&b.track))
    });

    let notes_end = notes
        .iter()
        .map(|n| n.onset_s + n.duration_s)
        .fold(0.0, f64::max);
    let duration_s = tick_to_seconds(&tempo_map, division, max_tick).max(notes_end);
    Ok(MidiScore {
        ticks_per_quarter: division,
        tempo_map,
        notes,
        duration_s,
        warnings,
    })
}

fn push_vlq(out: &mut Vec<u8>, mut value: u32) {
    let mut buf = [0u8; 4];
    let mut n = 0;
    loop {
        buf[n] = (value & 0x7f) as u8;
        n += 1;
        value >>= 7;
        if value == 0 {
            break;
        }
    }
    for i in (0..n).rev() {
        out.push(if i > 0 { buf[i] | 0x80 } else { buf[i] });
    }
}

const NOTE_VELOCITY: u8 = 100;

/// Writes a format 0 SMF. Each distinct program gets its own channel
/// (channel 9 is skipped); notes without a program use channel 0.
pub fn write_midi(score: &MidiScore) -> Vec<u8> {
    let tpq = if score.ticks_per_quarter == 0 || score.ticks_per_quarter & 0x8000 != 0 {
        DEFAULT_TICKS_PER_QUARTER
    } else {
        score.ticks_per_quarter
    };
    let timing = MidiScore {
        ticks_per_quarter: tpq,
        tempo_map: if score.tempo_map.is_empty() {
            vec![(0, DEFAULT_TEMPO_US)]
        } else {
            score.tempo_map.clone()
        },
        ..MidiScore::empty()
    };

    let mut programs: Vec<u8> = score.notes.iter().filter_map(|n| n.program).collect();
    programs.sort_unstable();
    programs.dedup();
    let usable: Vec<u8> = (0u8..16).filter(|&c| c != 9).collect();
    let has_unprogrammed = score.notes.iter().any(|n| n.program.is_none());
    let first_programmed = usize::from(has_unprogrammed);
    let channel_of = |program: Option<u8>| -> u8 {
        match program {
            None => 0,
            Some(p) => {
                let idx = programs.binary_search(&p).unwrap_or(0) + first_programmed;
                usable[idx.min(usable.len() - 1)]
            }
        }
    };

    // (tick, order, bytes): order puts tempo < program < note-off < note-on.
    let mut events: Vec<(u64, u8, Vec<u8>)> = Vec::new();
    for &(tick, us) in &timing.tempo_map {
        let b = us.to_be_bytes();
        events.push((tick, 0, vec![0xff, 0x51, 0x03, b[1], b[2], b[3]]));
    }
    let mut seen_channels = [false; 16];
    for &p in &programs {
        let ch = channel_of(Some(p));
        if !seen_channels[ch as usize] {
            seen_channels[ch as usize] = true;
            events.push((0, 1, vec![0xc0 | ch, p & 0x7f]));
        }
    }
    for note in &score.notes {
        let ch = channel_of(note.program);
        let on = timing.seconds_to_ticks(note.onset_s.max(0.0)).round().max(0.0) as u64;
        let off_f = timing.seconds_to_ticks(note.onset_s.max(0.0) + note.duration_s.max(0.0));
        let off = (off_f.round().max(0.0) as u64).max(on + 1);
        events.push((on, 3, vec![0x90 | ch, note.pitch & 0x7f, NOTE_VELOCITY]));
        events.push((off, 2, vec![0x80 | ch, note.pitch & 0x7f, 0]));
    }
    events.sort_by_key(|(tick, order, _)| (*tick, *order));

    let end_tick = {
        let dur = timing.seconds_to_ticks(score.duration_s.max(0.0)).round() as u64;
        events.last().map(|e| e.0).unwrap_or(0).max(dur)
    };

    let mut track = Vec::new();
    let mut last = 0u64;
    for (tick, _, bytes) in events {
        push_vlq(&mut track, (tick - last).min(0x0fff_ffff) as u32);
        track.extend_from_slice(&bytes);
        last = tick;
    }
    push_vlq(&mut track, (end_tick - last).min(0x0fff_ffff) as u32);
    track.extend_from_slice(&[0xff, 0x2f, 0x00]);

    let mut out = Vec::with_capacity(22 + track.len());
    out.extend_from_slice(b"MThd");
    out.extend_from_slice(&6u32.to_be_bytes());
    out.extend_from_slice(&0u16.to_be_bytes());
    out.extend_from_slice(&1u16.to_be_bytes());
    out.extend_from_slice(&tpq.to_be_bytes());
    out.extend_from_slice(b"MTrk");
    out.extend_from_slice(&(track.len() as u32).to_be_bytes());
    out.extend_from_slice(&track);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smf(format: u16, tpq: u16, tracks: &[Vec<u8>]) -> Vec<u8> {
        let mut out = b"MThd".to_vec();
        out.extend_from_slice(&6u32.to_be_bytes());
        out.extend_from_slice(&format.to_be_bytes());
        out.extend_from_slice(&(tracks.len() as u16).to_be_bytes());
        out.extend_from_slice(&tpq.to_be_bytes());
        for t in tracks {
            out.extend_from_slice(b"MTrk");
            out.extend_from_slice(&(t.len() as u32).to_be_bytes());
            out.extend_from_slice(t);
        }
        out
    }

    #[test]
    fn one_note_at_default_tempo() {
        // delta 0 note-on C4, delta 480 (0x83 0x60) note-off, end of track.
        let track = vec![
            0x00, 0x90, 60, 100, 0x83, 0x60, 0x80, 60, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let score = parse_midi(&smf(0, 480, &[track])).unwrap();
        assert_eq!(score.notes.len(), 1);
        let n = &score.notes[0];
        assert_eq!(n.pitch, 60);
        assert_eq!(n.onset_s, 0.0);
        assert_eq!(n.duration_s, 0.5);
        assert_eq!(score.tempo_map, vec![(0, 500_000)]);
        assert!(score.warnings.is_empty());
    }

    #[test]
    fn empty_track_gives_no_notes() {
        let score = parse_midi(&smf(1, 96, &[vec![0x00, 0xff, 0x2f, 0x00]])).unwrap();
        assert!(score.notes.is_empty());
        assert_eq!(score.duration_s, 0.0);
    }

    #[test]
    fn running_status_is_equivalent() {
        let explicit = vec![
            0x00, 0x90, 60, 90, 0x00, 0x90, 64, 90, 0x83, 0x60, 0x90, 60, 0, 0x00, 0x90, 64, 0,
            0x00, 0xff, 0x2f, 0x00,
        ];
        let running = vec![
            0x00, 0x90, 60, 90, 0x00, 64, 90, 0x83, 0x60, 60, 0, 0x00, 64, 0, 0x00, 0xff, 0x2f,
            0x00,
        ];
        let a = parse_midi(&smf(0, 480, &[explicit])).unwrap();
        let b = parse_midi(&smf(0, 480, &[running])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.notes.len(), 2);
    }

    #[test]
    fn format_two_is_rejected() {
        let err = parse_midi(&smf(2, 480, &[vec![0x00, 0xff, 0x2f, 0x00]])).unwrap_err();
        assert_eq!(err, MidiError::UnsupportedFormat(2));
    }

    #[test]
    fn bad_magic_and_short_header() {
        assert!(matches!(
            parse_midi(b""),
            Err(MidiError::MalformedHeader(_))
        ));
        assert!(matches!(
            parse_midi(b"RIFF\0\0\0\x06\0\0\0\x01\x01\xe0"),
            Err(MidiError::MalformedHeader(_))
        ));
        let mut short = b"MThd".to_vec();
        short.extend_from_slice(&4u32.to_be_bytes());
        short.extend_from_slice(&[0, 0, 0, 1]);
        assert!(matches!(
            parse_midi(&short),
            Err(MidiError::MalformedHeader(_))
        ));
    }

    #[test]
    fn dangling_note_closes_at_end_of_track() {
        let track = vec![0x00, 0x90, 62, 80, 0x83, 0x60, 0xff, 0x2f, 0x00];
        let score = parse_midi(&smf(0, 480, &[track])).unwrap();
        assert_eq!(score.notes.len(), 1);
        assert_eq!(score.notes[0].duration_s, 0.5);
        assert_eq!(
            score.warnings,
            vec![IngestWarning::DanglingNoteOn {
                track: 0,
                channel: 0,
                pitch: 62
            }]
        );
    }

    #[test]
    fn tempo_change_resolves_seconds() {
        // Tempo 1 s/quarter from tick 480 onward; note spans ticks 0..960.
        let track = vec![
            0x00, 0x90, 60, 100, 0x83, 0x60, 0xff, 0x51, 0x03, 0x0f, 0x42, 0x40, 0x83, 0x60, 0x80,
            60, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let score = parse_midi(&smf(0, 480, &[track])).unwrap();
        assert_eq!(score.tempo_map, vec![(0, 500_000), (480, 1_000_000)]);
        assert!((score.notes[0].duration_s - 1.5).abs() < 1e-12);
        assert!((score.seconds_to_ticks(1.5) - 960.0).abs() < 1e-9);
    }

    #[test]
    fn program_is_attached_and_written_back() {
        let track = vec![
            0x00, 0xc0, 40, 0x00, 0x90, 67, 100, 0x60, 0x80, 67, 0, 0x00, 0xff, 0x2f, 0x00,
        ];
        let score = parse_midi(&smf(0, 96, &[track])).unwrap();
        assert_eq!(score.notes[0].program, Some(40));
        let again = parse_midi(&write_midi(&score)).unwrap();
        assert_eq!(again.notes[0].program, Some(40));
    }

    #[test]
    fn empty_score_writes_header_and_end_of_track() {
        let bytes = write_midi(&MidiScore::empty());
        assert_eq!(&bytes[0..4], b"MThd");
        assert_eq!(&bytes[bytes.len() - 3..], &[0xff, 0x2f, 0x00]);
        let score = parse_midi(&bytes).unwrap();
        assert!(score.notes.is_empty());
    }

    #[test]
    fn truncated_track_is_typed_error() {
        let mut bytes = smf(0, 480, &[vec![0x00, 0x90, 60, 100, 0x83]]);
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(
            parse_midi(&bytes),
            Err(MidiError::MalformedTrack { .. })
        ));
    }

    #[test]
    fn vlq_encoding_matches_reference_values() {
        for (value, expected) in [
            (0u32, vec![0x00]),
            (0x7f, vec![0x7f]),
            (0x80, vec![0x81, 0x00]),
            (0x2000, vec![0xc0, 0x00]),
            (0x0fff_ffff, vec![0xff, 0xff, 0xff, 0x7f]),
        ] {
            let mut out = Vec::new();
            push_vlq(&mut out, value);
            assert_eq!(out, expected);
            assert_eq!(Cursor::new(&out).vlq(), Some(value));
        }
    }
}
