use std::f64::consts::PI;

use num_complex::Complex64;
use perfnet::dsp::{
    griffin_lim, istft, magnitude, read_wav, resample, stft, write_wav, AudioBuffer, ComplexSpectrogram, DspError,
    StftGeometry,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn sine(freq: f64, sr: u32, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin()).collect()
}

fn audio(samples: Vec<f64>) -> AudioBuffer {
    AudioBuffer::new(16_000, samples).unwrap()
}

/// Brute-force reference: reflect-pad, periodic Hann, direct DFT sum.
fn naive_stft(x: &[f64], n_fft: usize, hop: usize) -> Vec<Vec<Complex64>> {
    let len = x.len() as isize;
    let reflect = |i: isize| {
        let period = 2 * (len - 1);
        let mut j = i.rem_euclid(period);
        if j >= len {
            j = period - j;
        }
        x[j as usize]
    };
    let frames = x.len() / hop + 1;
    (0..frames)
        .map(|t| {
            let seg: Vec<f64> = (0..n_fft)
                .map(|n| {
                    let w = 0.5 - 0.5 * (2.0 * PI * n as f64 / n_fft as f64).cos();
                    w * reflect((t * hop + n) as isize - (n_fft / 2) as isize)
                })
                .collect();
            (0..=n_fft / 2)
                .map(|k| {
                    seg.iter()
                        .enumerate()
                        .map(|(n, v)| Complex64::from_polar(*v, -2.0 * PI * ((k * n) % n_fft) as f64 / n_fft as f64))
                        .sum()
                })
                .collect()
        })
        .collect()
}

#[test]
fn stft_matches_naive_dft() {
    let x = noise(1, 1024);
    let spec = stft(&audio(x.clone()), 1024, 256).unwrap();
    let oracle = naive_stft(&x, 1024, 256);
    assert_eq!(spec.frames, oracle.len());
    let mut worst = 0.0f64;
    for (t, frame) in oracle.iter().enumerate() {
        for (k, v) in frame.iter().enumerate() {
            worst = worst.max((spec.at(k, t) - v).norm());
        }
    }
    assert!(worst <= 1e-6, "max deviation {worst}");
}

#[test]
fn frame_count_law() {
    for len in [1usize, 255, 256, 257, 1000, 4096] {
        let spec = stft(&audio(noise(2, len.max(2))), 1024, 256).unwrap();
        assert_eq!(spec.frames, len.max(2) / 256 + 1);
    }
}

#[test]
fn zero_signal_gives_zero_bins() {
    let spec = stft(&audio(vec![0.0; 3000]), 512, 128).unwrap();
    assert!(spec.bins.iter().all(|c| c.norm() == 0.0));
    assert!(istft(&spec).unwrap().samples.iter().all(|&v| v == 0.0));
}

#[test]
fn bin_sixteen_sine_peaks_at_bin_sixteen() {
    let freq = 16.0 * 16_000.0 / 1024.0;
    let spec = magnitude(&stft(&audio(sine(freq, 16_000, 16_000)), 1024, 256).unwrap());
    for t in 4..spec.frames() - 4 {
        let argmax = (0..spec.bins()).max_by(|&a, &b| spec.at(a, t).total_cmp(&spec.at(b, t))).unwrap();
        assert_eq!(argmax, 16, "frame {t}");
    }
}

#[test]
fn geometry_errors() {
    let a = audio(noise(3, 100));
    assert!(matches!(stft(&a, 1000, 250), Err(DspError::InvalidGeometry(_))));
    assert!(matches!(stft(&a, 1024, 0), Err(DspError::InvalidGeometry(_))));
    assert!(matches!(stft(&a, 1024, 2048), Err(DspError::InvalidGeometry(_))));
    let non_cola = stft(&audio(noise(4, 2000)), 1024, 384).unwrap();
    assert!(matches!(istft(&non_cola), Err(DspError::InvalidGeometry(_))));
}

fn interior_error(x: &[f64]) -> f64 {
    let back = istft(&stft(&audio(x.to_vec()), 1024, 256).unwrap()).unwrap();
    (512..x.len() - 512).map(|i| (x[i] - back.samples[i]).abs()).fold(0.0, f64::max)
}

#[test]
fn round_trip_noise_and_sine() {
    assert!(interior_error(&noise(5, 16_000)) < 1e-6);
    assert!(interior_error(&sine(440.0, 16_000, 16_000)) < 1e-6);
}

#[test]
fn magnitude_matches_elementwise_modulus() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let geometry = StftGeometry { sample_rate: 16_000, n_fft: 16, hop: 4 };
    let bins: Vec<Complex64> =
        (0..9 * 5).map(|_| Complex64::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0))).collect();
    let spec = ComplexSpectrogram { geometry, frames: 5, signal_len: None, bins: bins.clone() };
    let mag = magnitude(&spec);
    for (m, c) in mag.values().iter().zip(&bins) {
        assert!((m - (c.re * c.re + c.im * c.im).sqrt()).abs() <= 1e-7);
    }
    let pythagoras = ComplexSpectrogram { geometry, frames: 1, signal_len: None, bins: vec![Complex64::new(3.0, 4.0); 9] };
    assert_eq!(magnitude(&pythagoras).values()[0], 5.0);
}

#[test]
fn griffin_lim_two_harmonics_converges() {
    let x: Vec<f64> = (0..16_000)
        .map(|i| {
            let t = i as f64 / 16_000.0;
            0.5 * (2.0 * PI * 440.0 * t).sin() + 0.5 * (2.0 * PI * 880.0 * t).sin()
        })
        .collect();
    let mag = magnitude(&stft(&audio(x), 1024, 256).unwrap());
    let out = griffin_lim(&mag, 60, 0).unwrap();
    let errors = &out.spectral_errors;
    assert!(errors.windows(2).all(|w| w[1] <= w[0] + 1e-7), "{errors:?}");
    assert!(*errors.last().unwrap() < 0.2, "final error {}", errors.last().unwrap());
    assert_eq!(out.audio.samples, griffin_lim(&mag, 60, 0).unwrap().audio.samples);
}

#[test]
fn griffin_lim_zero_iterations_and_silence() {
    let mag = magnitude(&stft(&audio(noise(7, 4000)), 1024, 256).unwrap());
    let a = griffin_lim(&mag, 0, 9).unwrap();
    let b = griffin_lim(&mag, 0, 9).unwrap();
    assert_eq!(a.audio.samples, b.audio.samples);
    assert_ne!(a.audio.samples, griffin_lim(&mag, 0, 10).unwrap().audio.samples);

    let silent = magnitude(&stft(&audio(vec![0.0; 4000]), 1024, 256).unwrap());
    let out = griffin_lim(&silent, 5, 1).unwrap();
    assert!(out.audio.samples.iter().all(|&v| v == 0.0));
}

#[test]
fn griffin_lim_length_within_one_hop_of_frame_duration() {
    let mag = magnitude(&stft(&audio(noise(8, 5000)), 1024, 256).unwrap());
    let out = griffin_lim(&mag, 2, 0).unwrap();
    let expected = mag.frames() as f64 / 62.5;
    assert!((out.audio.duration_s() - expected).abs() <= 256.0 / 16_000.0 + 1e-9);
}

#[test]
fn wav_round_trip_and_silence() {
    let full_scale = sine(440.0, 16_000, 16_000);
    let back = read_wav(&write_wav(&audio(full_scale.clone()))).unwrap();
    assert_eq!(back.sample_rate, 16_000);
    let worst = full_scale.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst <= 1.0 / 32768.0, "{worst}");

    let silence = read_wav(&write_wav(&audio(vec![0.0; 16_000]))).unwrap();
    assert_eq!(silence.samples.len(), 16_000);
    assert!(silence.samples.iter().all(|&v| v == 0.0));
}

#[test]
fn wav_header_layout() {
    let bytes = write_wav(&audio(vec![0.25; 10]));
    assert_eq!(bytes.len(), 44 + 20);
    assert_eq!(&bytes[0..4], b"RIFF");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 36 + 20);
    assert_eq!(&bytes[8..16], b"WAVEfmt ");
    assert_eq!(u16::from_le_bytes([bytes[20], bytes[21]]), 1);
    assert_eq!(u16::from_le_bytes([bytes[22], bytes[23]]), 1);
    assert_eq!(u16::from_le_bytes([bytes[34], bytes[35]]), 16);
    assert_eq!(&bytes[36..40], b"data");
    assert_eq!(u32::from_le_bytes(bytes[40..44].try_into().unwrap()), 20);
}

#[test]
fn wav_reads_stereo_float() {
    let mut bytes = Vec::new();
    let frames: [[f32; 2]; 3] = [[0.5, -0.5], [1.0, 0.0], [0.25, 0.75]];
    let data_len = (frames.len() * 8) as u32;
    bytes.extend_from_slice(b"RIFF");
    bytes.extend_from_slice(&(36 + data_len).to_le_bytes());
    bytes.extend_from_slice(b"WAVEfmt ");
    bytes.extend_from_slice(&16u32.to_le_bytes());
    bytes.extend_from_slice(&3u16.to_le_bytes());
    bytes.extend_from_slice(&2u16.to_le_bytes());
    bytes.extend_from_slice(&22_050u32.to_le_bytes());
    bytes.extend_from_slice(&(22_050u32 * 8).to_le_bytes());
    bytes.extend_from_slice(&8u16.to_le_bytes());
    bytes.extend_from_slice(&32u16.to_le_bytes());
    bytes.extend_from_slice(b"data");
    bytes.extend_from_slice(&data_len.to_le_bytes());
    for f in frames {
        for s in f {
            bytes.extend_from_slice(&s.to_le_bytes());
        }
    }
    let a = read_wav(&bytes).unwrap();
    assert_eq!(a.sample_rate, 22_050);
    assert_eq!(a.samples, vec![0.0, 0.5, 0.5]);
}

#[test]
fn wav_rejects_malformed_and_unsupported() {
    let good = write_wav(&audio(vec![0.1; 8]));
    assert!(matches!(read_wav(&good[..10]), Err(DspError::MalformedRiff(_))));
    let mut eight_bit = good.clone();
    eight_bit[34] = 8;
    assert!(matches!(read_wav(&eight_bit), Err(DspError::UnsupportedCodec(_))));
}

#[test]
fn resample_constant_and_identity() {
    let constant = AudioBuffer::new(44_100, vec![0.5; 44_100]).unwrap();
    let down = resample(&constant, 16_000);
    assert_eq!(down.samples.len(), 16_000);
    assert!(down.samples.iter().all(|&v| (v - 0.5).abs() < 1e-12));

    let x = AudioBuffer::new(16_000, noise(9, 500)).unwrap();
    assert_eq!(resample(&x, 16_000).samples, x.samples);
}

#[test]
fn resample_keeps_a_low_sine_in_place() {
    let x = AudioBuffer::new(44_100, sine(100.0, 44_100, 44_100)).unwrap();
    let y = resample(&x, 16_000);
    let mag = magnitude(&stft(&y, 1024, 256).unwrap());
    let t = mag.frames() / 2;
    let argmax = (0..mag.bins()).max_by(|&a, &b| mag.at(a, t).total_cmp(&mag.at(b, t))).unwrap();
    let expected = 100.0 * 1024.0 / 16_000.0;
    assert!((argmax as f64 - expected).abs() <= 1.0, "bin {argmax}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn stft_is_linear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let x = noise(seed, 700);
        let y = noise(seed.wrapping_add(1), 700);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let sx = stft(&audio(x), 256, 64).unwrap();
        let sy = stft(&audio(y), 256, 64).unwrap();
        let sm = stft(&audio(mix), 256, 64).unwrap();
        for ((m, p), q) in sm.bins.iter().zip(&sx.bins).zip(&sy.bins) {
            prop_assert!((m - (p * a + q * b)).norm() < 1e-6);
        }
    }

    #[test]
    fn round_trip_small_geometries(seed in any::<u64>(), log_n in 4u32..9, over in 2u32..4) {
        let n_fft = 1usize << log_n;
        let hop = n_fft >> over;
        let x = noise(seed, 3 * n_fft + 17);
        let back = istft(&stft(&audio(x.clone()), n_fft, hop).unwrap()).unwrap();
        for i in n_fft / 2..x.len() - n_fft / 2 {
            prop_assert!((x[i] - back.samples[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn magnitude_is_nonnegative(seed in any::<u64>()) {
        let mag = magnitude(&stft(&audio(noise(seed, 900)), 128, 32).unwrap());
        prop_assert!(mag.values().iter().all(|v| *v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn wav_round_trip_within_one_step(seed in any::<u64>(), len in 1usize..400) {
        let x = noise(seed, len);
        let back = read_wav(&write_wav(&audio(x.clone()))).unwrap();
        prop_assert_eq!(back.samples.len(), len);
        for (a, b) in x.iter().zip(&back.samples) {
            prop_assert!((a - b).abs() <= 1.0 / 32768.0);
        }
    }

    #[test]
    fn griffin_lim_is_monotone(seed in any::<u64>()) {
        let mag = magnitude(&stft(&audio(noise(seed, 2000)), 256, 64).unwrap());
        let out = griffin_lim(&mag, 8, seed).unwrap();
        prop_assert!(out.spectral_errors.windows(2).all(|w| w[1] <= w[0] + 1e-7));
    }
}
