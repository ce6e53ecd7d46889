use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{AudioBuffer, ComplexSpectrogram, DspError, Spectrogram, StftGeometry};

/// Planned forward/inverse FFTs and the analysis window for one geometry.
pub struct StftEngine {
    geometry: StftGeometry,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Maps an index of the centre-padded signal onto the original signal
/// (mirror without repeating the edge sample).
fn reflect(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let j = i.rem_euclid(period);
    if j >= len as isize {
        (period - j) as usize
    } else {
        j as usize
    }
}

pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

impl StftEngine {
    pub fn new(geometry: StftGeometry) -> Result<Self, DspError> {
        geometry.validate()?;
        let mut planner = FftPlanner::new();
        Ok(StftEngine {
            geometry,
            window: hann(geometry.n_fft),
            forward: planner.plan_fft_forward(geometry.n_fft),
            inverse: planner.plan_fft_inverse(geometry.n_fft),
        })
    }

    pub fn geometry(&self) -> StftGeometry {
        self.geometry
    }

    pub fn stft(&self, samples: &[f64]) -> ComplexSpectrogram {
        let StftGeometry { n_fft, hop, .. } = self.geometry;
        let pad = (n_fft / 2) as isize;
        let len = samples.len();
        let frames = self.geometry.frames_for(len);
        let bins = self.geometry.bins();
        let mut out = vec![Complex64::new(0.0, 0.0); bins * frames];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let origin = (t * hop) as isize - pad;
            for (n, slot) in buf.iter_mut().enumerate() {
                let x = if len == 0 {
                    0.0
                } else {
                    samples[reflect(origin + n as isize, len)]
                };
                *slot = Complex64::new(self.window[n] * x, 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            for k in 0..bins {
                out[k * frames + t] = buf[k];
            }
        }
        ComplexSpectrogram {
            geometry: self.geometry,
            frames,
            signal_len: Some(len),
            bins: out,
        }
    }

    /// Least-squares inverse: windowed overlap-add, folded back through the
    /// reflection padding, divided by the folded squared-window sum.
    pub fn istft(&self, spec: &ComplexSpectrogram) -> Result<Vec<f64>, DspError> {
        self.geometry.validate_cola()?;
        if spec.geometry != self.geometry {
            return Err(DspError::InvalidGeometry("spectrogram geometry differs from engine".into()));
        }
        let StftGeometry { n_fft, hop, .. } = self.geometry;
        let bins = self.geometry.bins();
        let frames = spec.frames;
        if frames == 0 || spec.bins.len() != bins * frames {
            return Err(DspError::InvalidGeometry(format!(
                "expected {bins}x{frames} bins, got {}",
                spec.bins.len()
            )));
        }
        let len = spec.signal_len.unwrap_or((frames - 1) * hop);
        if self.geometry.frames_for(len) != frames {
            return Err(DspError::InvalidGeometry(format!(
                "signal length {len} does not produce {frames} frames"
            )));
        }
        if len == 0 {
            return Ok(Vec::new());
        }
        let pad = (n_fft / 2) as isize;
        let mut acc = vec![0.0; len];
        let mut norm = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n_fft as f64;
        for t in 0..frames {
            buf[0] = Complex64::new(spec.bins[t].re, 0.0);
            for k in 1..bins {
                let v = spec.bins[k * frames + t];
                if k == n_fft / 2 {
                    buf[k] = Complex64::new(v.re, 0.0);
                } else {
                    buf[k] = v;
                    buf[n_fft - k] = v.conj();
                }
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let origin = (t * hop) as isize - pad;
            for n in 0..n_fft {
                let w = self.window[n];
                let m = reflect(origin + n as isize, len);
                acc[m] += w * buf[n].re * scale;
                norm[m] += w * w;
            }
        }
        Ok(acc
            .iter()
            .zip(&norm)
            .map(|(a, w)| if *w > 1e-12 { a / w } else { 0.0 })
            .collect())
    }
}

pub fn stft(audio: &AudioBuffer, n_fft: usize, hop: usize) -> Result<ComplexSpectrogram, DspError> {
    let engine = StftEngine::new(StftGeometry {
        sample_rate: audio.sample_rate,
        n_fft,
        hop,
    })?;
    Ok(engine.stft(&audio.samples))
}

pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioBuffer, DspError> {
    let engine = StftEngine::new(spec.geometry)?;
    let samples = engine.istft(spec)?;
    Ok(AudioBuffer {
        sample_rate: spec.geometry.sample_rate,
        samples,
    })
}

pub fn magnitude(spec: &ComplexSpectrogram) -> Spectrogram {
    Spectrogram {
        geometry: spec.geometry,
        frames: spec.frames,
        values: spec.bins.iter().map(|c| c.norm()).collect(),
    }
}
