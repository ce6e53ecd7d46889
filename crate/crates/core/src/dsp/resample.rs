use super::AudioBuffer;

/// Linear-interpolation resampler. Output length is `round(len * to / from)`;
/// equal rates return the input unchanged. No anti-alias filtering is applied.
pub fn resample(audio: &AudioBuffer, to_rate: u32) -> AudioBuffer {
    assert!(to_rate > 0, "target sample rate must be positive");
    if audio.sample_rate == to_rate || audio.samples.is_empty() {
        return AudioBuffer {
            sample_rate: to_rate,
            samples: audio.samples.clone(),
        };
    }
    let x = &audio.samples;
    let ratio = audio.sample_rate as f64 / to_rate as f64;
    let out_len = (x.len() as f64 * to_rate as f64 / audio.sample_rate as f64).round() as usize;
    let last = x.len() - 1;
    let samples = (0..out_len)
        .map(|i| {
            let pos = i as f64 * ratio;
            let idx = pos.floor() as usize;
            if idx >= last {
                return x[last];
            }
            let frac = pos - idx as f64;
            x[idx] + (x[idx + 1] - x[idx]) * frac
        })
        .collect();
    AudioBuffer {
        sample_rate: to_rate,
        samples,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_rate_is_identity() {
        let a = AudioBuffer::new(16_000, vec![0.1, -0.3, 0.7]).unwrap();
        assert_eq!(resample(&a, 16_000), a);
    }

    #[test]
    fn constant_stays_constant() {
        let a = AudioBuffer::new(44_100, vec![0.5; 44_100]).unwrap();
        let b = resample(&a, 16_000);
        assert_eq!(b.samples.len(), 16_000);
        assert!(b.samples.iter().all(|&s| (s - 0.5).abs() < 1e-15));
    }

    #[test]
    fn upsampling_interpolates_midpoints() {
        let a = AudioBuffer::new(1000, vec![0.0, 1.0, 0.0]).unwrap();
        let b = resample(&a, 2000);
        assert_eq!(b.samples, vec![0.0, 0.5, 1.0, 0.5, 0.0, 0.0]);
    }
}
