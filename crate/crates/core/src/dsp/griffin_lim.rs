use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AudioBuffer, ComplexSpectrogram, DspError, Spectrogram, StftEngine};

#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub audio: AudioBuffer,
    /// `‖|stft(x_i)| − mag‖_F / ‖mag‖_F` for every estimate `x_0 ..= x_iterations`.
    pub spectral_errors: Vec<f64>,
}

/// Relative Frobenius distance between `|spec|` and `target`; zero when the target is silent.
pub fn spectral_error(spec: &ComplexSpectrogram, target: &Spectrogram) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (c, m) in spec.bins.iter().zip(target.values()) {
        let d = c.norm() - m;
        num += d * d;
        den += m * m;
    }
    if den == 0.0 {
        0.0
    } else {
        (num / den).sqrt()
    }
}

/// Reconstructs a waveform whose STFT magnitude approximates `mag`.
///
/// Phase starts as seeded uniform noise in `[-π, π)`; every iteration
/// synthesizes with the current phase and re-analyses to take the new phase.
pub fn griffin_lim(mag: &Spectrogram, iterations: usize, seed: u64) -> Result<GriffinLimOutput, DspError> {
    let geometry = mag.geometry();
    geometry.validate_cola()?;
    let engine = StftEngine::new(geometry)?;
    let frames = mag.frames();
    if frames == 0 {
        return Err(DspError::InvalidGeometry("spectrogram has no frames".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = ComplexSpectrogram {
        geometry,
        frames,
        signal_len: None,
        bins: mag
            .values()
            .iter()
            .map(|&m| Complex64::from_polar(m, rng.random_range(-PI..PI)))
            .collect(),
    };

    let mut samples = engine.istft(&spec)?;
    let mut errors = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let analysed = engine.stft(&samples);
        errors.push(spectral_error(&analysed, mag));
        for ((slot, a), &m) in spec.bins.iter_mut().zip(&analysed.bins).zip(mag.values()) {
            let phase = a.im.atan2(a.re);
            *slot = Complex64::from_polar(m, phase);
        }
        samples = engine.istft(&spec)?;
    }
    errors.push(spectral_error(&engine.stft(&samples), mag));

    Ok(GriffinLimOutput {
        audio: AudioBuffer {
            sample_rate: geometry.sample_rate,
            samples,
        },
        spectral_errors: errors,
    })
}
