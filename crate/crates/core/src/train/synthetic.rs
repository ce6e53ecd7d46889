//! Additive-synthesis corpus: a fixed phrase rendered exactly from its MIDI.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use crate::dsp::{write_wav, AudioBuffer};
use crate::midi::{parse_midi, write_midi, MidiScore, NoteEvent};

use super::TrainError;

/// Melody spanning C4 to G6 so the upper harmonics of the high notes reach
/// the top quarter of a 16 kHz spectrum.
const PHRASE: &[(u8, f64, f64)] = &[
    (60, 0.0, 0.5),
    (64, 0.5, 0.5),
    (67, 1.0, 0.5),
    (72, 1.5, 0.5),
    (76, 2.0, 0.5),
    (84, 2.5, 0.5),
    (91, 3.0, 0.5),
    (88, 3.5, 0.5),
    (48, 0.0, 2.0),
    (55, 2.0, 2.0),
];

const ATTACK_S: f64 = 0.01;
const RELEASE_S: f64 = 0.03;
const DECAY_PER_S: f64 = 1.5;
const NOTE_GAIN: f64 = 0.12;

/// The fixed phrase, tiled or cut to `duration_s` seconds.
pub fn synthetic_phrase(duration_s: f64, transpose: i8) -> MidiScore {
    let mut score = MidiScore::empty();
    let period = 4.0;
    let mut base = 0.0;
    while base < duration_s {
        for &(pitch, onset, dur) in PHRASE {
            let onset = base + onset;
            if onset >= duration_s {
                continue;
            }
            let pitch = (pitch as i16 + transpose as i16).clamp(0, 127) as u8;
            score.notes.push(NoteEvent {
                pitch,
                onset_s: onset,
                duration_s: dur.min(duration_s - onset),
                track: 0,
                program: None,
            });
        }
        base += period;
    }
    score.notes.sort_by(|a, b| a.onset_s.total_cmp(&b.onset_s).then(a.pitch.cmp(&b.pitch)));
    score.duration_s = duration_s;
    score
}

fn midi_hz(pitch: u8) -> f64 {
    440.0 * 2f64.powf((pitch as f64 - 69.0) / 12.0)
}

/// Renders every note as `harmonics` partials with amplitudes `1/k`, a short
/// linear attack and release and an exponential decay. Partials at or above
/// Nyquist are skipped. The buffer lasts exactly `score.duration_s`.
pub fn render_additive(score: &MidiScore, sample_rate: u32, harmonics: usize) -> AudioBuffer {
    let sr = sample_rate as f64;
    let len = (score.duration_s * sr).round() as usize;
    let mut samples = vec![0.0; len];
    for note in &score.notes {
        let f0 = midi_hz(note.pitch);
        let start = (note.onset_s * sr).round() as usize;
        let n = (note.duration_s * sr).round() as usize;
        for (i, out) in samples.iter_mut().skip(start).take(n).enumerate() {
            let t = i as f64 / sr;
            let remaining = note.duration_s - t;
            let env = (t / ATTACK_S).min(1.0) * (remaining / RELEASE_S).clamp(0.0, 1.0) * (-DECAY_PER_S * t).exp();
            let mut v = 0.0;
            for k in 1..=harmonics {
                let f = f0 * k as f64;
                if f >= sr / 2.0 {
                    break;
                }
                v += (2.0 * PI * f * t).sin() / k as f64;
            }
            *out += NOTE_GAIN * env * v;
        }
    }
    AudioBuffer {
        sample_rate,
        samples,
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub score: MidiScore,
    pub midi: Vec<u8>,
    pub audio: AudioBuffer,
    pub wav: Vec<u8>,
}

/// One (MIDI, WAV) pair; audio is rendered from the re-parsed MIDI so both
/// files describe the same tick-quantized notes.
pub fn synthetic_pair(duration_s: f64, harmonics: usize, sample_rate: u32, transpose: i8) -> SyntheticPair {
    let midi = write_midi(&synthetic_phrase(duration_s, transpose));
    let score = parse_midi(&midi).expect("generated MIDI parses");
    let audio = render_additive(&score, sample_rate, harmonics);
    let wav = write_wav(&audio);
    SyntheticPair {
        score,
        midi,
        audio,
        wav,
    }
}

/// Writes `count` transposed pairs plus `manifest.tsv` into `dir` and
/// returns the manifest path. Every pair is labelled `synth`.
pub fn write_synthetic_corpus(dir: &Path, count: usize, duration_s: f64, sample_rate: u32) -> Result<PathBuf, TrainError> {
    std::fs::create_dir_all(dir).map_err(|e| TrainError::io(dir, e))?;
    let mut manifest = String::new();
    for i in 0..count {
        let pair = synthetic_pair(duration_s, 4, sample_rate, (i % 5) as i8 - 2);
        let midi_name = format!("phrase{i:03}.mid");
        let wav_name = format!("phrase{i:03}.wav");
        for (name, bytes) in [(&midi_name, &pair.midi), (&wav_name, &pair.wav)] {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| TrainError::io(&path, e))?;
        }
        manifest.push_str(&format!("{midi_name}\t{wav_name}\tsynth\n"));
    }
    let path = dir.join("manifest.tsv");
    std::fs::write(&path, manifest).map_err(|e| TrainError::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phrase_lasts_requested_time() {
        let s = synthetic_phrase(4.0, 0);
        assert_eq!(s.duration_s, 4.0);
        assert_eq!(s.notes.len(), PHRASE.len());
        let short = synthetic_phrase(1.0, 0);
        assert!(short.notes.iter().all(|n| n.onset_s + n.duration_s <= 1.0 + 1e-12));
    }

    #[test]
    fn render_length_and_range() {
        let pair = synthetic_pair(1.0, 4, 16000, 0);
        assert_eq!(pair.audio.samples.len(), 16000);
        assert!(pair.audio.samples.iter().all(|s| s.abs() < 1.0));
        assert!(pair.audio.samples.iter().any(|s| s.abs() > 0.01));
    }
}
