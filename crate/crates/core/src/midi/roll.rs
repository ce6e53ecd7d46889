use serde::{Deserialize, Serialize};

use super::{MidiError, MidiScore, NoteEvent, DEFAULT_TEMPO_US, DEFAULT_TICKS_PER_QUARTER};

/// Binary pitch-by-frame matrix, rows `pitch_min..=pitch_max`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Pianoroll {
    pitch_min: u8,
    pitch_max: u8,
    frame_rate: f64,
    frames: usize,
    data: Vec<u8>,
}

impl Pianoroll {
    pub fn zeros(pitch_min: u8, pitch_max: u8, frame_rate: f64, frames: usize) -> Result<Self, MidiError> {
        check_range(pitch_min as i32, pitch_max as i32)?;
        check_frame_rate(frame_rate)?;
        if frames == 0 {
            return Err(MidiError::InvalidRoll("a pianoroll needs at least one frame".into()));
        }
        let rows = (pitch_max - pitch_min) as usize + 1;
        Ok(Pianoroll {
            pitch_min,
            pitch_max,
            frame_rate,
            frames,
            data: vec![0; rows * frames],
        })
    }

    pub fn pitch_min(&self) -> u8 {
        self.pitch_min
    }

    pub fn pitch_max(&self) -> u8 {
        self.pitch_max
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn pitches(&self) -> usize {
        (self.pitch_max - self.pitch_min) as usize + 1
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Row-major cells, `pitches() * frames()` entries in `{0, 1}`.
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, pitch: u8, frame: usize) -> bool {
        if pitch < self.pitch_min || pitch > self.pitch_max || frame >= self.frames {
            return false;
        }
        self.data[(pitch - self.pitch_min) as usize * self.frames + frame] != 0
    }

    pub fn set(&mut self, pitch: u8, frame: usize, on: bool) {
        assert!(pitch >= self.pitch_min && pitch <= self.pitch_max, "pitch out of range");
        assert!(frame < self.frames, "frame out of range");
        self.data[(pitch - self.pitch_min) as usize * self.frames + frame] = on as u8;
    }

    pub fn active_cells(&self) -> usize {
        self.data.iter().filter(|&&c| c != 0).count()
    }

    /// Maximal runs of set cells per pitch, as `(pitch, start, end_exclusive)`,
    /// ordered by pitch then start.
    pub fn runs(&self) -> Vec<(u8, usize, usize)> {
        let mut out = Vec::new();
        for row in 0..self.pitches() {
            let cells = &self.data[row * self.frames..(row + 1) * self.frames];
            let mut t = 0;
            while t < cells.len() {
                if cells[t] != 0 {
                    let start = t;
                    while t < cells.len() && cells[t] != 0 {
                        t += 1;
                    }
                    out.push((self.pitch_min + row as u8, start, t));
                } else {
                    t += 1;
                }
            }
        }
        out
    }

    /// Copies the cells that fall inside another pitch range; rows outside are dropped.
    pub fn with_pitch_range(&self, pitch_min: u8, pitch_max: u8) -> Result<Self, MidiError> {
        let mut out = Pianoroll::zeros(pitch_min, pitch_max, self.frame_rate, self.frames)?;
        for pitch in pitch_min.max(self.pitch_min)..=pitch_max.min(self.pitch_max) {
            let src = (pitch - self.pitch_min) as usize * self.frames;
            let dst = (pitch - pitch_min) as usize * self.frames;
            out.data[dst..dst + self.frames].copy_from_slice(&self.data[src..src + self.frames]);
        }
        Ok(out)
    }

    /// First `frames` columns (at least one, at most all).
    pub fn truncated(&self, frames: usize) -> Self {
        let frames = frames.clamp(1, self.frames);
        let mut data = Vec::with_capacity(self.pitches() * frames);
        for row in self.data.chunks_exact(self.frames) {
            data.extend_from_slice(&row[..frames]);
        }
        Pianoroll {
            data,
            frames,
            ..self.clone()
        }
    }

    pub fn to_sparse(&self) -> SparseRoll {
        SparseRoll {
            frame_rate: self.frame_rate,
            pitch_min: self.pitch_min,
            pitch_max: self.pitch_max,
            num_frames: Some(self.frames),
            notes: self
                .runs()
                .into_iter()
                .map(|(pitch, start, end)| SparseNote {
                    pitch,
                    onset_frame: start,
                    offset_frame: end,
                })
                .collect(),
        }
    }
}

/// Sparse note-span JSON form shared with the HTTP API. `offset_frame` is exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseRoll {
    pub frame_rate: f64,
    pub pitch_min: u8,
    pub pitch_max: u8,
    /// Total frame count; when absent the roll ends at the last offset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_frames: Option<usize>,
    pub notes: Vec<SparseNote>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SparseNote {
    pub pitch: u8,
    pub onset_frame: usize,
    pub offset_frame: usize,
}

impl SparseRoll {
    /// Checks the roll invariants, naming the offending field on failure.
    pub fn validate(&self) -> Result<(), MidiError> {
        check_range(self.pitch_min as i32, self.pitch_max as i32)?;
        check_frame_rate(self.frame_rate)?;
        if self.num_frames == Some(0) {
            return Err(MidiError::InvalidRoll("num_frames: must be at least 1".into()));
        }
        for (i, n) in self.notes.iter().enumerate() {
            if n.pitch < self.pitch_min || n.pitch > self.pitch_max {
                return Err(MidiError::InvalidRoll(format!(
                    "notes[{i}].pitch: {} outside {}..={}",
                    n.pitch, self.pitch_min, self.pitch_max
                )));
            }
            if n.offset_frame <= n.onset_frame {
                return Err(MidiError::InvalidRoll(format!(
                    "notes[{i}].offset_frame: {} must exceed onset_frame {}",
                    n.offset_frame, n.onset_frame
                )));
            }
            if let Some(t) = self.num_frames {
                if n.offset_frame > t {
                    return Err(MidiError::InvalidRoll(format!(
                        "notes[{i}].offset_frame: {} exceeds num_frames {t}",
                        n.offset_frame
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Result<Pianoroll, MidiError> {
        self.validate()?;
        let frames = self.num_frames.unwrap_or_else(|| {
            self.notes.iter().map(|n| n.offset_frame).max().unwrap_or(0).max(1)
        });
        let mut roll = Pianoroll::zeros(self.pitch_min, self.pitch_max, self.frame_rate, frames)?;
        for n in &self.notes {
            let row = (n.pitch - self.pitch_min) as usize * frames;
            roll.data[row + n.onset_frame..row + n.offset_frame].fill(1);
        }
        Ok(roll)
    }
}

fn check_range(min: i32, max: i32) -> Result<(), MidiError> {
    if min < 0 || max > 127 || min > max {
        return Err(MidiError::InvalidRange { min, max });
    }
    Ok(())
}

fn check_frame_rate(frame_rate: f64) -> Result<(), MidiError> {
    if !(frame_rate.is_finite() && frame_rate > 0.0) {
        return Err(MidiError::InvalidFrameRate(frame_rate));
    }
    Ok(())
}

/// `floor`, with values within rounding noise of an integer snapped onto it,
/// so that `k / rate * rate` quantizes back to `k`.
fn frame_floor(x: f64) -> i64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as i64
    } else {
        x.floor() as i64
    }
}

fn frame_ceil(x: f64) -> i64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.abs().max(1.0) {
        nearest as i64
    } else {
        x.ceil() as i64
    }
}

/// Frame span `[start, end)` a note occupies at `frame_rate`; always at least one frame.
pub(crate) fn note_frames(note: &NoteEvent, frame_rate: f64) -> (usize, usize) {
    let start = frame_floor(note.onset_s * frame_rate).max(0);
    let end = frame_floor((note.onset_s + note.duration_s) * frame_rate).max(start + 1);
    (start as usize, end as usize)
}

/// Result of quantizing a score, with the count of notes outside the pitch range.
#[derive(Debug, Clone, PartialEq)]
pub struct RollConversion {
    pub roll: Pianoroll,
    pub dropped_notes: usize,
}

/// Quantizes a score onto a binary roll. An empty score yields an all-zero
/// roll of at least one frame.
pub fn score_to_pianoroll(
    score: &MidiScore,
    frame_rate: f64,
    pitch_min: u8,
    pitch_max: u8,
) -> Result<RollConversion, MidiError> {
    check_range(pitch_min as i32, pitch_max as i32)?;
    check_frame_rate(frame_rate)?;
    let mut frames = frame_ceil(score.duration_s.max(0.0) * frame_rate).max(1) as usize;
    let mut spans = Vec::with_capacity(score.notes.len());
    let mut dropped = 0;
    for note in &score.notes {
        if note.pitch < pitch_min || note.pitch > pitch_max {
            dropped += 1;
            continue;
        }
        let (start, end) = note_frames(note, frame_rate);
        frames = frames.max(end);
        spans.push((note.pitch, start, end));
    }
    let mut roll = Pianoroll::zeros(pitch_min, pitch_max, frame_rate, frames)?;
    for (pitch, start, end) in spans {
        let row = (pitch - pitch_min) as usize * frames;
        roll.data[row + start..row + end].fill(1);
    }
    if dropped > 0 {
        log::warn!("{dropped} notes outside pitch range {pitch_min}..={pitch_max} dropped");
    }
    Ok(RollConversion {
        roll,
        dropped_notes: dropped,
    })
}

/// Each maximal run of ones becomes one note; the score lasts exactly the roll.
pub fn pianoroll_to_score(roll: &Pianoroll, program: Option<u8>) -> MidiScore {
    let rate = roll.frame_rate;
    let mut notes: Vec<NoteEvent> = roll
        .runs()
        .into_iter()
        .map(|(pitch, start, end)| NoteEvent {
            pitch,
            onset_s: start as f64 / rate,
            duration_s: (end - start) as f64 / rate,
            track: 0,
            program,
        })
        .collect();
    notes.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then(a.pitch.cmp(&b.pitch)));
    MidiScore {
        ticks_per_quarter: DEFAULT_TICKS_PER_QUARTER,
        tempo_map: vec![(0, DEFAULT_TEMPO_US)],
        notes,
        duration_s: roll.frames as f64 / rate,
        warnings: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn note(pitch: u8, onset_s: f64, duration_s: f64) -> NoteEvent {
        NoteEvent {
            pitch,
            onset_s,
            duration_s,
            track: 0,
            program: None,
        }
    }

    fn score(notes: Vec<NoteEvent>) -> MidiScore {
        let duration_s = notes.iter().map(|n| n.onset_s + n.duration_s).fold(0.0, f64::max);
        MidiScore {
            notes,
            duration_s,
            ..MidiScore::empty()
        }
    }

    fn row(roll: &Pianoroll, pitch: u8) -> Vec<usize> {
        (0..roll.frames()).filter(|&t| roll.get(pitch, t)).collect()
    }

    #[test]
    fn one_second_note_fills_ten_frames() {
        let r = score_to_pianoroll(&score(vec![note(60, 0.0, 1.0)]), 10.0, 0, 127)
            .unwrap()
            .roll;
        assert_eq!(r.frames(), 10);
        assert_eq!(row(&r, 60), (0..10).collect::<Vec<_>>());
        assert_eq!(r.active_cells(), 10);
    }

    #[test]
    fn overlapping_same_pitch_notes_union() {
        let r = score_to_pianoroll(
            &score(vec![note(60, 0.0, 1.0), note(60, 0.5, 1.0)]),
            10.0,
            0,
            127,
        )
        .unwrap()
        .roll;
        assert_eq!(row(&r, 60), (0..15).collect::<Vec<_>>());
    }

    #[test]
    fn short_note_gets_one_frame() {
        let r = score_to_pianoroll(&score(vec![note(60, 0.0, 0.01)]), 10.0, 0, 127)
            .unwrap()
            .roll;
        assert_eq!(row(&r, 60), vec![0]);
    }

    #[test]
    fn out_of_range_notes_are_counted() {
        let conv = score_to_pianoroll(
            &score(vec![note(20, 0.0, 1.0), note(60, 0.0, 1.0), note(100, 0.0, 1.0)]),
            10.0,
            48,
            84,
        )
        .unwrap();
        assert_eq!(conv.dropped_notes, 2);
        assert_eq!(conv.roll.active_cells(), 10);
    }

    #[test]
    fn empty_score_gives_single_zero_frame() {
        let conv = score_to_pianoroll(&MidiScore::empty(), 62.5, 0, 127).unwrap();
        assert_eq!(conv.roll.frames(), 1);
        assert_eq!(conv.roll.active_cells(), 0);
    }

    #[test]
    fn invalid_range_and_rate() {
        assert!(matches!(
            score_to_pianoroll(&MidiScore::empty(), 10.0, 70, 60),
            Err(MidiError::InvalidRange { .. })
        ));
        assert!(matches!(
            score_to_pianoroll(&MidiScore::empty(), 0.0, 0, 127),
            Err(MidiError::InvalidFrameRate(_))
        ));
    }

    #[test]
    fn run_becomes_one_note() {
        let mut r = Pianoroll::zeros(0, 127, 10.0, 10).unwrap();
        for t in 0..10 {
            r.set(60, t, true);
        }
        let s = pianoroll_to_score(&r, None);
        assert_eq!(s.notes, vec![note(60, 0.0, 1.0)]);
        assert!(pianoroll_to_score(&Pianoroll::zeros(0, 127, 10.0, 4).unwrap(), None)
            .notes
            .is_empty());
    }

    #[test]
    fn round_trip_at_model_frame_rate() {
        let mut r = Pianoroll::zeros(40, 90, 62.5, 300).unwrap();
        for (p, s, e) in [(40u8, 0usize, 3usize), (41, 3, 7), (90, 123, 300), (60, 17, 18)] {
            for t in s..e {
                r.set(p, t, true);
            }
        }
        let back = score_to_pianoroll(&pianoroll_to_score(&r, Some(0)), 62.5, 40, 90)
            .unwrap()
            .roll;
        assert_eq!(back, r);
    }

    #[test]
    fn sparse_validation_names_fields() {
        let bad = SparseRoll {
            frame_rate: 62.5,
            pitch_min: 0,
            pitch_max: 127,
            num_frames: None,
            notes: vec![SparseNote {
                pitch: 60,
                onset_frame: 5,
                offset_frame: 5,
            }],
        };
        let err = bad.validate().unwrap_err().to_string();
        assert!(err.contains("notes[0].offset_frame"), "{err}");
    }

    #[test]
    fn sparse_json_shape() {
        let mut r = Pianoroll::zeros(0, 127, 62.5, 40).unwrap();
        for t in 0..32 {
            r.set(60, t, true);
        }
        let json = serde_json::to_value(r.to_sparse()).unwrap();
        assert_eq!(
            json,
            serde_json::json!({
                "frame_rate": 62.5, "pitch_min": 0, "pitch_max": 127, "num_frames": 40,
                "notes": [{"pitch": 60, "onset_frame": 0, "offset_frame": 32}]
            })
        );
        let back: SparseRoll = serde_json::from_value(json).unwrap();
        assert_eq!(back.to_dense().unwrap(), r);
    }
}
