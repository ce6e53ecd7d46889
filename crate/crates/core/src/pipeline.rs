//! Pianoroll to waveform: both subnets, then Griffin-Lim.

use std::time::{Duration, Instant};

use crate::contour::contour_forward;
use crate::dsp::{griffin_lim, AudioBuffer};
use crate::midi::Pianoroll;
use crate::model::Model;
use crate::texture::texture_forward;
use crate::Error;

/// Default Griffin-Lim iteration count.
pub const DEFAULT_GL_ITERS: usize = 60;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimings {
    pub contour: Duration,
    pub texture: Duration,
    pub griffin_lim: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.contour + self.texture + self.griffin_lim
    }
}

#[derive(Debug, Clone)]
pub struct Rendered {
    pub audio: AudioBuffer,
    pub frames: usize,
    pub timings: StageTimings,
}

/// Renders `roll` with the instrument at `label_index`. The output lasts
/// `(frames - 1) * hop` samples, the span covered by the frame centres.
pub fn render_roll(
    model: &Model<f32>,
    roll: &Pianoroll,
    label_index: usize,
    gl_iters: usize,
    seed: u64,
) -> Result<Rendered, Error> {
    let roll = model.prepare_roll(roll)?;
    let condition = model.condition(label_index)?;
    let t0 = Instant::now();
    let coarse = contour_forward(&roll, condition.as_ref(), &model.contour, model.config().geometry)?;
    let t1 = Instant::now();
    let refined = texture_forward(&coarse, &model.texture)?;
    let t2 = Instant::now();
    let gl = griffin_lim(&refined, gl_iters, seed)?;
    let t3 = Instant::now();
    Ok(Rendered {
        frames: refined.frames(),
        audio: gl.audio,
        timings: StageTimings {
            contour: t1 - t0,
            texture: t2 - t1,
            griffin_lim: t3 - t2,
        },
    })
}
