//! Manifest parsing and (pianoroll, spectrogram) pair construction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::dsp::{magnitude, read_wav, resample, Spectrogram, StftEngine, StftGeometry};
use crate::midi::{parse_midi, score_to_pianoroll, Pianoroll};

use super::TrainError;

/// Largest relative length difference tolerated before truncation.
pub const ALIGNMENT_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub midi_path: PathBuf,
    pub wav_path: PathBuf,
    pub instrument_label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// Parses `midi<TAB>wav<TAB>label` lines. Blank lines and `#` comments are
    /// skipped; relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, TrainError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [midi, wav, label] = fields[..] else {
                return Err(TrainError::Manifest {
                    line: i + 1,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            };
            let label = label.trim();
            if label.is_empty() {
                return Err(TrainError::Manifest {
                    line: i + 1,
                    reason: "instrument label is empty".into(),
                });
            }
            entries.push(ManifestEntry {
                midi_path: base_dir.join(midi.trim()),
                wav_path: base_dir.join(wav.trim()),
                instrument_label: label.to_string(),
            });
        }
        Ok(DatasetManifest { entries })
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Distinct labels in sorted order; a label's position is its condition index.
    pub fn labels(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.entries.iter().map(|e| e.instrument_label.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn label_index(&self) -> BTreeMap<String, usize> {
        self.labels().into_iter().enumerate().map(|(i, l)| (l, i)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct TrainingPair {
    pub source: String,
    pub roll: Pianoroll,
    pub target: Spectrogram,
    pub instrument: usize,
}

impl TrainingPair {
    pub fn frames(&self) -> usize {
        self.roll.frames()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetOptions {
    pub geometry: StftGeometry,
    pub pitch_min: u8,
    pub pitch_max: u8,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            geometry: StftGeometry::default(),
            pitch_min: 0,
            pitch_max: 127,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub labels: Vec<String>,
    pub pairs: Vec<TrainingPair>,
}

impl Dataset {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }
}

/// Builds one aligned pair from in-memory files.
pub fn build_pair(
    source: &str,
    midi_bytes: &[u8],
    wav_bytes: &[u8],
    instrument: usize,
    options: &DatasetOptions,
) -> Result<TrainingPair, TrainError> {
    let geometry = options.geometry;
    let with_source = |e: crate::Error| TrainError::Entry {
        source_name: source.to_string(),
        error: Box::new(e),
    };
    let score = parse_midi(midi_bytes).map_err(|e| with_source(e.into()))?;
    let roll = score_to_pianoroll(&score, geometry.frame_rate(), options.pitch_min, options.pitch_max)
        .map_err(|e| with_source(e.into()))?
        .roll;
    let audio = read_wav(wav_bytes).map_err(|e| with_source(e.into()))?;
    let audio = resample(&audio, geometry.sample_rate);
    let engine = StftEngine::new(geometry).map_err(|e| with_source(e.into()))?;
    let spec = magnitude(&engine.stft(&audio.samples));

    let (t_roll, t_spec) = (roll.frames(), spec.frames());
    let longer = t_roll.max(t_spec) as f64;
    if (t_roll as f64 - t_spec as f64).abs() > ALIGNMENT_TOLERANCE * longer {
        return Err(TrainError::Alignment {
            source_name: source.to_string(),
            roll_frames: t_roll,
            spec_frames: t_spec,
        });
    }
    let frames = t_roll.min(t_spec);
    Ok(TrainingPair {
        source: source.to_string(),
        roll: roll.truncated(frames),
        target: spec.truncated(frames),
        instrument,
    })
}

/// Reads every manifest entry and aligns it. An empty manifest gives an empty dataset.
pub fn build_dataset(manifest: &DatasetManifest, options: &DatasetOptions) -> Result<Dataset, TrainError> {
    let index = manifest.label_index();
    let mut pairs = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let midi = std::fs::read(&entry.midi_path).map_err(|e| TrainError::io(&entry.midi_path, e))?;
        let wav = std::fs::read(&entry.wav_path).map_err(|e| TrainError::io(&entry.wav_path, e))?;
        let source = format!("{} | {}", entry.midi_path.display(), entry.wav_path.display());
        pairs.push(build_pair(&source, &midi, &wav, index[&entry.instrument_label], options)?);
    }
    Ok(Dataset {
        labels: manifest.labels(),
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_parsing() {
        let text = "# comment\na.mid\ta.wav\tpiano\n\nb.mid\tb.wav\tviolin\nc.mid\tc.wav\tpiano\n";
        let m = DatasetManifest::parse(text, Path::new("/data")).unwrap();
        assert_eq!(m.entries.len(), 3);
        assert_eq!(m.entries[0].midi_path, PathBuf::from("/data/a.mid"));
        assert_eq!(m.labels(), vec!["piano".to_string(), "violin".to_string()]);
        assert_eq!(m.label_index()["violin"], 1);
    }

    #[test]
    fn manifest_rejects_bad_lines() {
        assert!(matches!(
            DatasetManifest::parse("a.mid a.wav piano\n", Path::new(".")),
            Err(TrainError::Manifest { line: 1, .. })
        ));
        assert!(DatasetManifest::parse("a\tb\t \n", Path::new(".")).is_err());
    }

    #[test]
    fn empty_manifest_is_empty_dataset() {
        let d = build_dataset(&DatasetManifest::default(), &DatasetOptions::default()).unwrap();
        assert!(d.is_empty());
    }
}
