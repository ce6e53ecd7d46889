//! Score-to-audio performance rendering.
//!
//! A binary pianoroll is translated into a coarse magnitude spectrogram by
//! [`contour`], refined band by band by [`texture`], and turned into a
//! waveform with Griffin-Lim ([`dsp::griffin_lim`]). [`train`] fits both
//! networks jointly on (MIDI, WAV) pairs, [`service`] exposes the pipeline
//! over HTTP and [`cli`] drives everything from the command line.

pub mod cli;
pub mod contour;
pub mod dsp;
pub mod midi;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod selftest;
pub mod service;
pub mod texture;
pub mod train;

pub use contour::{contour_forward, ConditionVector, ContourConfig, ContourNet};
pub use model::{Model, ModelConfig, Prediction};
pub use pipeline::{render_roll, Rendered, StageTimings};
pub use texture::{band_partition, texture_forward, BandPartition, TextureConfig, TextureNet};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("MissingCondition: the network is conditioned but no condition vector was given")]
    MissingCondition,
    #[error("InvalidBandCount: cannot split {bins} bins into {bands} bands")]
    InvalidBandCount { bins: usize, bands: usize },
    #[error("NonFinite: {0}")]
    NonFinite(String),
    #[error("UnknownInstrument: {label:?} (available: {})", available.join(", "))]
    UnknownInstrument { label: String, available: Vec<String> },
}

impl ModelError {
    pub fn name(&self) -> &'static str {
        match self {
            ModelError::InvalidConfig(_) => "InvalidConfig",
            ModelError::ShapeMismatch(_) => "ShapeMismatch",
            ModelError::MissingCondition => "MissingCondition",
            ModelError::InvalidBandCount { .. } => "InvalidBandCount",
            ModelError::NonFinite(_) => "NonFinite",
            ModelError::UnknownInstrument { .. } => "UnknownInstrument",
        }
    }
}

/// Any failure of the end-to-end pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Midi(#[from] midi::MidiError),
    #[error(transparent)]
    Dsp(#[from] dsp::DspError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Checkpoint(#[from] train::CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Short machine-readable name of the failure.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Midi(e) => e.name(),
            Error::Dsp(e) => e.name(),
            Error::Model(e) => e.name(),
            Error::Train(e) => e.name(),
            Error::Checkpoint(e) => e.name(),
            Error::Io { .. } => "IoError",
        }
    }
}
