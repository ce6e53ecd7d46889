//! Audio I/O, STFT analysis/synthesis, and Griffin-Lim phase reconstruction.
//!
//! Matrices are stored bin-major: `values[bin * frames + frame]`, which is
//! also the channel-major layout the networks consume.

mod griffin_lim;
mod resample;
mod stft;
mod wav;

pub use griffin_lim::{griffin_lim, spectral_error, GriffinLimOutput};
pub use resample::resample;
pub use stft::{istft, magnitude, stft, StftEngine};
pub use wav::{read_wav, write_wav};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_N_FFT: usize = 1024;
pub const DEFAULT_HOP: usize = 256;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum DspError {
    #[error("InvalidGeometry: {0}")]
    InvalidGeometry(String),
    #[error("UnsupportedCodec: {0}")]
    UnsupportedCodec(String),
    #[error("MalformedRiff: {0}")]
    MalformedRiff(String),
    #[error("InvalidAudio: {0}")]
    InvalidAudio(String),
}

impl DspError {
    pub fn name(&self) -> &'static str {
        match self {
            DspError::InvalidGeometry(_) => "InvalidGeometry",
            DspError::UnsupportedCodec(_) => "UnsupportedCodec",
            DspError::MalformedRiff(_) => "MalformedRiff",
            DspError::InvalidAudio(_) => "InvalidAudio",
        }
    }
}

/// Analysis parameters shared by every spectrogram. The window is always periodic Hann.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftGeometry {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub hop: usize,
}

impl Default for StftGeometry {
    fn default() -> Self {
        StftGeometry {
            sample_rate: DEFAULT_SAMPLE_RATE,
            n_fft: DEFAULT_N_FFT,
            hop: DEFAULT_HOP,
        }
    }
}

impl StftGeometry {
    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }

    /// Number of frames `stft` produces for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if self.sample_rate == 0 {
            return Err(DspError::InvalidGeometry("sample_rate must be positive".into()));
        }
        if !self.n_fft.is_power_of_two() || self.n_fft < 2 {
            return Err(DspError::InvalidGeometry(format!(
                "n_fft {} is not a power of two",
                self.n_fft
            )));
        }
        if self.hop == 0 || self.hop > self.n_fft {
            return Err(DspError::InvalidGeometry(format!(
                "hop {} outside 1..={}",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }

    /// Synthesis additionally needs the squared Hann window to overlap-add to a constant.
    pub fn validate_cola(&self) -> Result<(), DspError> {
        self.validate()?;
        if self.n_fft % self.hop != 0 || self.n_fft / self.hop < 4 {
            return Err(DspError::InvalidGeometry(format!(
                "hop {} is not COLA for a Hann window of {} (need n_fft/hop = 4, 8, ...)",
                self.hop, self.n_fft
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, samples: Vec<f64>) -> Result<Self, DspError> {
        if sample_rate == 0 {
            return Err(DspError::InvalidAudio("sample_rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(DspError::InvalidAudio(format!("sample {i} is not finite")));
        }
        Ok(AudioBuffer {
            sample_rate,
            samples,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub geometry: StftGeometry,
    pub frames: usize,
    /// Length of the analysed signal; synthesis defaults to `(frames - 1) * hop`.
    pub signal_len: Option<usize>,
    pub bins: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn at(&self, bin: usize, frame: usize) -> Complex64 {
        self.bins[bin * self.frames + frame]
    }
}

/// Non-negative magnitude matrix, `geometry.bins()` rows by `frames` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    geometry: StftGeometry,
    frames: usize,
    values: Vec<f64>,
}

impl Spectrogram {
    pub fn new(geometry: StftGeometry, frames: usize, values: Vec<f64>) -> Result<Self, DspError> {
        geometry.validate()?;
        if values.len() != geometry.bins() * frames {
            return Err(DspError::InvalidGeometry(format!(
                "expected {}x{} values, got {}",
                geometry.bins(),
                frames,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DspError::InvalidAudio(format!(
                "magnitude {i} is negative or not finite"
            )));
        }
        Ok(Spectrogram {
            geometry,
            frames,
            values,
        })
    }

    pub fn zeros(geometry: StftGeometry, frames: usize) -> Self {
        Spectrogram {
            geometry,
            frames,
            values: vec![0.0; geometry.bins() * frames],
        }
    }

    pub fn geometry(&self) -> StftGeometry {
        self.geometry
    }

    pub fn bins(&self) -> usize {
        self.geometry.bins()
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, bin: usize, frame: usize) -> f64 {
        self.values[bin * self.frames + frame]
    }

    /// Keeps the first `frames` columns.
    pub fn truncated(&self, frames: usize) -> Spectrogram {
        let frames = frames.min(self.frames);
        let mut values = Vec::with_capacity(self.bins() * frames);
        for row in self.values.chunks(self.frames) {
            values.extend_from_slice(&row[..frames]);
        }
        Spectrogram {
            geometry: self.geometry,
            frames,
            values,
        }
    }
}
