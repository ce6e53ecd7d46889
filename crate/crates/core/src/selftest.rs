//! Built-in property suites run by `perfnet selftest`: an FFT-free DFT
//! oracle, round trips, Griffin-Lim monotonicity and gradient checks.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::contour::{ConditionVector, ContourConfig, ContourNet};
use crate::dsp::{griffin_lim, istft, AudioBuffer, StftEngine, StftGeometry};
use crate::midi::{parse_midi, pianoroll_to_score, score_to_pianoroll, write_midi, MidiScore, NoteEvent, Pianoroll};
use crate::nn::ParamSet;
use crate::texture::{TextureConfig, TextureNet};
use crate::train::{loss_and_grad, LossWeights};

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn suite(name: &str, f: impl FnOnce() -> Result<String, String>) -> SuiteResult {
    let (passed, detail) = match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(Ok(d)) => (true, d),
        Ok(Err(d)) => (false, d),
        Err(_) => (false, "panicked".to_string()),
    };
    SuiteResult {
        name: name.to_string(),
        passed,
        detail,
    }
}

pub fn run_all() -> Vec<SuiteResult> {
    vec![
        suite("stft-dft-oracle", dft_oracle),
        suite("stft-round-trip", stft_round_trip),
        suite("griffin-lim", griffin_lim_suite),
        suite("pianoroll-round-trip", roll_round_trip),
        suite("midi-round-trip", midi_round_trip),
        suite("gradient-contour", gradient_contour),
        suite("gradient-texture", gradient_texture),
        suite("gradient-composed", gradient_composed),
    ]
}

fn noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dft_oracle() -> Result<String, String> {
    let g = StftGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = noise(&mut rng, 1024);
    let spec = StftEngine::new(g).map_err(|e| e.to_string())?.stft(&x);
    let n = g.n_fft;
    let half = n as isize / 2;
    let len = x.len() as isize;
    let reflect = |i: isize| -> f64 {
        let period = 2 * (len - 1);
        let mut j = i.rem_euclid(period);
        if j >= len {
            j = period - j;
        }
        x[j as usize]
    };
    let window: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos()).collect();
    let mut worst = 0.0f64;
    for t in 0..spec.frames {
        let frame: Vec<f64> = (0..n)
            .map(|i| window[i] * reflect(t as isize * g.hop as isize - half + i as isize))
            .collect();
        for k in 0..g.bins() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, v) in frame.iter().enumerate() {
                acc += Complex64::from_polar(*v, -2.0 * PI * ((k * i) % n) as f64 / n as f64);
            }
            worst = worst.max((acc - spec.at(k, t)).norm());
        }
    }
    check(worst <= 1e-6, format!("max deviation {worst:.3e}"))
}

fn interior_error(x: &[f64], n_fft: usize) -> Result<f64, String> {
    let audio = AudioBuffer::new(16000, x.to_vec()).map_err(|e| e.to_string())?;
    let spec = crate::dsp::stft(&audio, n_fft, n_fft / 4).map_err(|e| e.to_string())?;
    let back = istft(&spec).map_err(|e| e.to_string())?;
    let lo = n_fft / 2;
    let hi = x.len() - n_fft / 2;
    Ok((lo..hi).map(|i| (x[i] - back.samples[i]).abs()).fold(0.0, f64::max))
}

fn stft_round_trip() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise_err = interior_error(&noise(&mut rng, 16000), 1024)?;
    let sine: Vec<f64> = (0..16000).map(|i| (2.0 * PI * 440.0 * i as f64 / 16000.0).sin()).collect();
    let sine_err = interior_error(&sine, 1024)?;
    check(
        noise_err < 1e-6 && sine_err < 1e-6,
        format!("noise {noise_err:.3e}, sine {sine_err:.3e}"),
    )
}

fn griffin_lim_suite() -> Result<String, String> {
    let g = StftGeometry::default();
    let x: Vec<f64> = (0..8000)
        .map(|i| {
            let t = i as f64 / 16000.0;
            0.5 * (2.0 * PI * 440.0 * t).sin() + 0.25 * (2.0 * PI * 880.0 * t).sin()
        })
        .collect();
    let engine = StftEngine::new(g).map_err(|e| e.to_string())?;
    let mag = crate::dsp::magnitude(&engine.stft(&x));
    let a = griffin_lim(&mag, 20, 7).map_err(|e| e.to_string())?;
    let b = griffin_lim(&mag, 20, 7).map_err(|e| e.to_string())?;
    let monotone = a.spectral_errors.windows(2).all(|w| w[1] <= w[0] + 1e-7);
    let same = a.audio.samples == b.audio.samples;
    check(
        monotone && same,
        format!(
            "error {:.4} -> {:.4}, monotone {monotone}, deterministic {same}",
            a.spectral_errors[0],
            a.spectral_errors.last().copied().unwrap_or(0.0)
        ),
    )
}

fn roll_round_trip() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..50 {
        let mut roll = Pianoroll::zeros(40, 55, 62.5, 64).map_err(|e| e.to_string())?;
        for p in 40..=55 {
            for t in 0..64 {
                roll.set(p, t, rng.random_bool(0.3));
            }
        }
        let back = score_to_pianoroll(&pianoroll_to_score(&roll, None), 62.5, 40, 55)
            .map_err(|e| e.to_string())?
            .roll;
        if back != roll {
            return Err(format!("case {case} differs"));
        }
    }
    Ok("50 random 16x64 rolls".into())
}

fn midi_round_trip() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let tick = 0.5 / 480.0;
    for case in 0..20 {
        let score = random_score(&mut rng, 100, tick);
        let back = parse_midi(&write_midi(&score)).map_err(|e| e.to_string())?;
        let key = |n: &NoteEvent| (n.pitch, n.onset_s, n.duration_s);
        let mut a: Vec<_> = score.notes.iter().map(key).collect();
        let mut b: Vec<_> = back.notes.iter().map(key).collect();
        a.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        b.sort_by(|x, y| x.partial_cmp(y).expect("finite"));
        let close = a.len() == b.len()
            && a.iter().zip(&b).all(|(x, y)| {
                x.0 == y.0 && (x.1 - y.1).abs() <= tick + 1e-12 && (x.2 - y.2).abs() <= tick + 1e-12
            });
        if !close {
            return Err(format!("case {case}: note sets differ"));
        }
    }
    Ok("20 scores of 100 notes".into())
}

/// Notes on a tick grid; same-pitch notes never overlap, since MIDI cannot
/// tell apart two sounding instances of one key.
fn random_score(rng: &mut ChaCha8Rng, count: usize, tick: f64) -> MidiScore {
    let mut free_at = [0u32; 128];
    let mut score = MidiScore::empty();
    for _ in 0..count {
        let pitch = rng.random_range(0..128u8);
        let onset = free_at[pitch as usize] + rng.random_range(0..2000);
        let dur = rng.random_range(1..1000);
        free_at[pitch as usize] = onset + dur;
        score.notes.push(NoteEvent {
            pitch,
            onset_s: onset as f64 * tick,
            duration_s: dur as f64 * tick,
            track: 0,
            program: None,
        });
    }
    score.duration_s = score.notes_end_s();
    score
}

fn check(ok: bool, detail: String) -> Result<String, String> {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Compares analytic gradients against central differences for a few
/// entries of every tensor. `loss` evaluates the scalar loss for `params`.
fn compare(
    params: &ParamSet<f64>,
    analytic: &ParamSet<f64>,
    mut loss: impl FnMut(&ParamSet<f64>) -> f64,
) -> Result<String, String> {
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut probe = params.clone();
    for t in 0..params.len() {
        let n = params.get(t).len();
        for &i in &[0, n / 2, n - 1] {
            let orig = probe.get(t)[i];
            probe.get_mut(t)[i] = orig + h;
            let up = loss(&probe);
            probe.get_mut(t)[i] = orig - h;
            let down = loss(&probe);
            probe.get_mut(t)[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(t)[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(err);
            checked += 1;
            if err > 1e-4 {
                return Err(format!(
                    "{}[{i}]: analytic {a:.6e} vs numeric {numeric:.6e}",
                    params.param(t).name
                ));
            }
        }
    }
    Ok(format!("{checked} entries, worst relative error {worst:.2e}"))
}

fn tiny_contour(condition_dim: usize) -> ContourConfig {
    ContourConfig {
        in_channels: 16,
        out_channels: 33,
        encoder_widths: vec![8, 8],
        kernel: 5,
        condition_dim,
    }
}

fn half_sq(out: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let grad: Vec<f64> = out.iter().zip(target).map(|(o, t)| o - t).collect();
    (0.5 * grad.iter().map(|d| d * d).sum::<f64>(), grad)
}

fn gradient_contour() -> Result<String, String> {
    let net = ContourNet::<f64>::init(tiny_contour(2), 11).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let frames = 16;
    let input: Vec<f64> = (0..16 * frames).map(|_| rng.random_bool(0.3) as u8 as f64).collect();
    let target: Vec<f64> = (0..33 * frames).map(|_| rng.random_range(0.0..2.0)).collect();
    let cond = ConditionVector::one_hot(2, 1).map_err(|e| e.to_string())?;
    let pass = net.forward(&input, frames, Some(&cond)).map_err(|e| e.to_string())?;
    let (_, d) = half_sq(&pass.output, &target);
    let mut grads = net.params().zeros_like();
    net.backward(&pass, &d, &mut grads, false);
    let config = net.config().clone();
    compare(net.params(), &grads, |p| {
        let n = ContourNet::from_params(config.clone(), p.clone()).expect("layout");
        let out = n.forward(&input, frames, Some(&cond)).expect("forward").output;
        half_sq(&out, &target).0
    })
}

fn tiny_texture() -> TextureConfig {
    TextureConfig {
        num_bands: 2,
        blocks_per_band: 2,
        hidden: 4,
    }
}

fn gradient_texture() -> Result<String, String> {
    let net = TextureNet::<f64>::init(tiny_texture(), 21).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (bins, frames) = (16, 8);
    let coarse: Vec<f64> = (0..bins * frames).map(|_| rng.random_range(0.5..1.5)).collect();
    let target: Vec<f64> = (0..bins * frames).map(|_| rng.random_range(0.0..2.0)).collect();
    let pass = net.forward(&coarse, bins, frames, false).map_err(|e| e.to_string())?;
    if pass.pre_clamp.iter().any(|v| v.abs() < 1e-3) {
        return Err("fixture lands on the clamp boundary".into());
    }
    let (_, d) = half_sq(&pass.output, &target);
    let mut grads = net.params().zeros_like();
    net.backward(&pass, &d, &mut grads);
    let config = net.config().clone();
    compare(net.params(), &grads, |p| {
        let n = TextureNet::from_params(config.clone(), p.clone()).expect("layout");
        half_sq(&n.forward(&coarse, bins, frames, false).expect("forward").output, &target).0
    })
}

fn gradient_composed() -> Result<String, String> {
    let contour = ContourNet::<f64>::init(tiny_contour(0), 31).map_err(|e| e.to_string())?;
    let texture = TextureNet::<f64>::init(tiny_texture(), 32).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let frames = 16;
    let bins = 33;
    let input: Vec<f64> = (0..16 * frames).map(|_| rng.random_bool(0.3) as u8 as f64).collect();
    let target: Vec<f64> = (0..bins * frames).map(|_| rng.random_range(0.0..2.0)).collect();
    let w = LossWeights::default();
    let total = |c: &ContourNet<f64>, t: &TextureNet<f64>| -> f64 {
        let cp = c.forward(&input, frames, None).expect("contour");
        let tp = t.forward(&cp.output, bins, frames, false).expect("texture");
        loss_and_grad(&cp.output, &tp.output, &target, w, 1.0).0.total
    };
    let cp = contour.forward(&input, frames, None).map_err(|e| e.to_string())?;
    let tp = texture.forward(&cp.output, bins, frames, false).map_err(|e| e.to_string())?;
    let (_, mut dc, dr) = loss_and_grad(&cp.output, &tp.output, &target, w, 1.0);
    let mut tg = texture.params().zeros_like();
    let through = texture.backward(&tp, &dr, &mut tg);
    for (a, b) in dc.iter_mut().zip(&through) {
        *a += b;
    }
    let mut cg = contour.params().zeros_like();
    contour.backward(&cp, &dc, &mut cg, false);
    let (cc, tc) = (contour.config().clone(), texture.config().clone());
    let c_report = compare(contour.params(), &cg, |p| {
        total(&ContourNet::from_params(cc.clone(), p.clone()).expect("layout"), &texture)
    })?;
    let t_report = compare(texture.params(), &tg, |p| {
        total(&contour, &TextureNet::from_params(tc.clone(), p.clone()).expect("layout"))
    })?;
    Ok(format!("contour: {c_report}; texture: {t_report}"))
}
