//! Standard MIDI File ingest and the binary pianoroll representation.
//!
//! Parsing yields a tempo-resolved [`MidiScore`]; [`score_to_pianoroll`] and
//! [`pianoroll_to_score`] convert between note events and the dense
//! pitch-by-frame matrix consumed by the model. Velocities are read but
//! discarded: the roll is binary.

mod roll;
mod smf;

pub use roll::{
    pianoroll_to_score, score_to_pianoroll, Pianoroll, RollConversion, SparseNote, SparseRoll,
};
pub use smf::{parse_midi, write_midi};

use serde::{Deserialize, Serialize};

/// Default tempo when a file carries no Set Tempo meta event (120 bpm).
pub const DEFAULT_TEMPO_US: u32 = 500_000;

/// Ticks per quarter note used when writing scores that came from a roll.
pub const DEFAULT_TICKS_PER_QUARTER: u16 = 480;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MidiError {
    #[error("MalformedHeader: {0}")]
    MalformedHeader(String),
    #[error("UnsupportedFormat: SMF format {0} is not supported")]
    UnsupportedFormat(u16),
    #[error("UnsupportedDivision: SMPTE time division {0:#06x} is not supported")]
    UnsupportedDivision(u16),
    #[error("MalformedTrack: track {track}: {reason}")]
    MalformedTrack { track: usize, reason: String },
    #[error("InvalidRange: pitch range {min}..={max} is empty or outside 0..=127")]
    InvalidRange { min: i32, max: i32 },
    #[error("InvalidFrameRate: {0}")]
    InvalidFrameRate(f64),
    #[error("InvalidRoll: {0}")]
    InvalidRoll(String),
}

impl MidiError {
    /// Short variant name, used by the HTTP layer in error bodies.
    pub fn name(&self) -> &'static str {
        match self {
            MidiError::MalformedHeader(_) => "MalformedHeader",
            MidiError::UnsupportedFormat(_) => "UnsupportedFormat",
            MidiError::UnsupportedDivision(_) => "UnsupportedDivision",
            MidiError::MalformedTrack { .. } => "MalformedTrack",
            MidiError::InvalidRange { .. } => "InvalidRange",
            MidiError::InvalidFrameRate(_) => "InvalidFrameRate",
            MidiError::InvalidRoll(_) => "InvalidRoll",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoteEvent {
    pub pitch: u8,
    pub onset_s: f64,
    pub duration_s: f64,
    pub track: usize,
    pub program: Option<u8>,
}

/// Non-fatal conditions encountered while parsing or quantizing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IngestWarning {
    /// A note-on had no matching note-off and was closed at end of track.
    DanglingNoteOn { track: usize, channel: u8, pitch: u8 },
    /// A note-on/note-off pair spanned zero ticks and was dropped.
    ZeroLengthNote { track: usize, pitch: u8 },
    /// The track ended without an End of Track meta event.
    MissingEndOfTrack { track: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MidiScore {
    pub ticks_per_quarter: u16,
    /// `(tick, microseconds per quarter)`, strictly increasing ticks, first at 0.
    pub tempo_map: Vec<(u64, u32)>,
    pub notes: Vec<NoteEvent>,
    pub duration_s: f64,
    #[serde(default)]
    pub warnings: Vec<IngestWarning>,
}

impl MidiScore {
    pub fn empty() -> Self {
        MidiScore {
            ticks_per_quarter: DEFAULT_TICKS_PER_QUARTER,
            tempo_map: vec![(0, DEFAULT_TEMPO_US)],
            notes: Vec::new(),
            duration_s: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn tick_to_seconds(&self, tick: u64) -> f64 {
        tick_to_seconds(&self.tempo_map, self.ticks_per_quarter, tick)
    }

    /// Inverse of [`MidiScore::tick_to_seconds`], in fractional ticks.
    pub fn seconds_to_ticks(&self, seconds: f64) -> f64 {
        let tpq = self.ticks_per_quarter.max(1) as f64;
        let mut elapsed = 0.0;
        for (i, &(tick, tempo)) in self.tempo_map.iter().enumerate() {
            let sec_per_tick = tempo as f64 * 1e-6 / tpq;
            match self.tempo_map.get(i + 1) {
                Some(&(next, _)) => {
                    let span = (next - tick) as f64 * sec_per_tick;
                    if seconds < elapsed + span {
                        return tick as f64 + (seconds - elapsed) / sec_per_tick;
                    }
                    elapsed += span;
                }
                None => return tick as f64 + (seconds - elapsed) / sec_per_tick,
            }
        }
        seconds / (DEFAULT_TEMPO_US as f64 * 1e-6 / tpq)
    }

    /// Latest note end time.
    pub fn notes_end_s(&self) -> f64 {
        self.notes
            .iter()
            .map(|n| n.onset_s + n.duration_s)
            .fold(0.0, f64::max)
    }
}

pub(crate) fn tick_to_seconds(tempo_map: &[(u64, u32)], tpq: u16, tick: u64) -> f64 {
    let tpq = tpq.max(1) as f64;
    let mut seconds = 0.0;
    for (i, &(start, tempo)) in tempo_map.iter().enumerate() {
        if tick <= start {
            break;
        }
        let end = tempo_map
            .get(i + 1)
            .map(|&(next, _)| next.min(tick))
            .unwrap_or(tick);
        seconds += (end - start) as f64 * tempo as f64 * 1e-6 / tpq;
    }
    seconds
}
