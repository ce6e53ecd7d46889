//! Joint Adam training of both subnets on random fixed-length segments.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{Model, ModelConfig};
use crate::nn::AdamConfig;

use super::checkpoint::{save_checkpoint, Checkpoint, OptimizerState};
use super::dataset::{Dataset, TrainingPair};
use super::loss::{loss_and_grad, LossBreakdown, LossWeights};
use super::TrainError;

const SHUFFLE_SALT: u64 = 0x5eed_0f_5f1e;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub segment_frames: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub adam: AdamConfig,
    /// Write a checkpoint every this many steps; 0 disables.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            batch_size: 4,
            segment_frames: 256,
            seed: 0,
            loss_weights: LossWeights::default(),
            adam: AdamConfig::default(),
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, model: &ModelConfig) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let pad = model.contour.pad_factor();
        if self.segment_frames == 0 || self.segment_frames % pad != 0 {
            return bad(format!("segment_frames must be a positive multiple of {pad}"));
        }
        let w = self.loss_weights;
        let a = self.adam;
        if !(w.coarse >= 0.0 && w.refined >= 0.0 && w.coarse + w.refined > 0.0) {
            return bad("loss weights must be non-negative and not both zero".into());
        }
        if !(a.learning_rate > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad("Adam hyperparameters out of range".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    /// 1-based index of the step; the loss is measured before its update.
    pub step: u64,
    pub loss: LossBreakdown,
}

pub const METRICS_HEADER: &str = "step,loss,loss_coarse,loss_refined";

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        format!("{},{},{},{}", self.step, self.loss.total, self.loss.coarse, self.loss.refined)
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "{METRICS_HEADER}")?;
    for r in rows {
        writeln!(out, "{}", r.csv_line())?;
    }
    Ok(())
}

/// One cropped training example.
struct Segment {
    input: Vec<f32>,
    target: Vec<f32>,
    instrument: usize,
}

fn crop(pair: &TrainingPair, offset: usize, len: usize) -> Segment {
    let frames = pair.frames();
    let take = len.min(frames - offset);
    let p = pair.roll.pitches();
    let bins = pair.target.bins();
    let mut input = vec![0f32; p * len];
    for (row, src) in input.chunks_exact_mut(len).zip(pair.roll.data().chunks_exact(frames)) {
        for (d, &s) in row[..take].iter_mut().zip(&src[offset..offset + take]) {
            *d = s as f32;
        }
    }
    let mut target = vec![0f32; bins * len];
    for (row, src) in target.chunks_exact_mut(len).zip(pair.target.values().chunks_exact(frames)) {
        for (d, &s) in row[..take].iter_mut().zip(&src[offset..offset + take]) {
            *d = s as f32;
        }
    }
    Segment {
        input,
        target,
        instrument: pair.instrument,
    }
}

pub struct Trainer<'a> {
    dataset: &'a Dataset,
    config: TrainConfig,
    state: Checkpoint,
    permutation: Option<(u64, Vec<usize>)>,
}

impl<'a> Trainer<'a> {
    /// Fresh model initialised from `config.seed`.
    pub fn new(dataset: &'a Dataset, model_config: ModelConfig, config: TrainConfig) -> Result<Self, TrainError> {
        let model = Model::init(model_config, dataset.labels.clone(), config.seed)?;
        let mut state = Checkpoint::from_model(model);
        state.optimizer = Some(OptimizerState::new(config.adam, &state.model));
        state.train_config = Some(config.clone());
        Self::resume(dataset, state, config)
    }

    /// Continues from a checkpoint that carries optimizer state.
    pub fn resume(dataset: &'a Dataset, mut state: Checkpoint, config: TrainConfig) -> Result<Self, TrainError> {
        if dataset.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        config.validate(state.model.config())?;
        let model_config = state.model.config();
        for pair in &dataset.pairs {
            if pair.roll.pitches() != model_config.pitches() || pair.target.bins() != model_config.geometry.bins() {
                return Err(TrainError::InvalidConfig(format!(
                    "pair {} has shape {}x{} / {}x{}, model expects {} pitches and {} bins",
                    pair.source,
                    pair.roll.pitches(),
                    pair.frames(),
                    pair.target.bins(),
                    pair.target.frames(),
                    model_config.pitches(),
                    model_config.geometry.bins()
                )));
            }
            if pair.instrument >= state.model.labels().len().max(1) {
                return Err(TrainError::InvalidConfig(format!("pair {} has an unknown instrument", pair.source)));
            }
        }
        if state.optimizer.is_none() {
            state.optimizer = Some(OptimizerState::new(config.adam, &state.model));
        }
        state.train_config = Some(config.clone());
        Ok(Trainer {
            dataset,
            config,
            state,
            permutation: None,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.state.step
    }

    pub fn model(&self) -> &Model<f32> {
        &self.state.model
    }

    pub fn checkpoint(&self) -> &Checkpoint {
        &self.state
    }

    pub fn into_checkpoint(self) -> Checkpoint {
        self.state
    }

    fn pair_for(&mut self, global: u64) -> usize {
        let n = self.dataset.len() as u64;
        let epoch = global / n;
        if self.permutation.as_ref().map(|(e, _)| *e) != Some(epoch) {
            let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ SHUFFLE_SALT);
            rng.set_stream(epoch);
            let mut order: Vec<usize> = (0..self.dataset.len()).collect();
            order.shuffle(&mut rng);
            self.permutation = Some((epoch, order));
        }
        self.permutation.as_ref().expect("permutation set").1[(global % n) as usize]
    }

    /// Runs one optimizer step and returns the pre-update loss.
    pub fn step(&mut self) -> Result<MetricsRow, TrainError> {
        let step = self.state.step;
        let batch = self.config.batch_size;
        let seg_len = self.config.segment_frames;
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(step.wrapping_add(1));

        let mut contour_grads = self.state.model.contour.params().zeros_like();
        let mut texture_grads = self.state.model.texture.params().zeros_like();
        let bins = self.state.model.config().geometry.bins();
        let mut total = LossBreakdown::default();
        let scale = 1.0 / batch as f64;
        let dataset = self.dataset;
        for b in 0..batch {
            let idx = self.pair_for(step * batch as u64 + b as u64);
            let pair = &dataset.pairs[idx];
            let max_offset = pair.frames().saturating_sub(seg_len);
            let offset = rng.random_range(0..=max_offset);
            let seg = crop(pair, offset, seg_len);

            let model = &self.state.model;
            let condition = model.condition(seg.instrument)?;
            let cpass = model.contour.forward(&seg.input, seg_len, condition.as_ref())?;
            let tpass = model.texture.forward(&cpass.output, bins, seg_len, false)?;
            let (loss, mut d_coarse, d_refined) =
                loss_and_grad(&cpass.output, &tpass.output, &seg.target, self.config.loss_weights, scale);
            if !loss.total.is_finite() {
                return Err(TrainError::NonFiniteLoss { step: step + 1 });
            }
            let through_texture = model.texture.backward(&tpass, &d_refined, &mut texture_grads);
            for (d, t) in d_coarse.iter_mut().zip(&through_texture) {
                *d += *t;
            }
            model.contour.backward(&cpass, &d_coarse, &mut contour_grads, false);
            total.total += loss.total * scale;
            total.coarse += loss.coarse * scale;
            total.refined += loss.refined * scale;
        }
        if !contour_grads.all_finite() || !texture_grads.all_finite() {
            return Err(TrainError::NonFiniteLoss { step: step + 1 });
        }
        let opt = self.state.optimizer.as_mut().expect("optimizer present");
        opt.step(&mut self.state.model, &contour_grads, &texture_grads);
        self.state.step += 1;
        Ok(MetricsRow {
            step: step + 1,
            loss: total,
        })
    }

    /// Steps until `step_count() == until`, calling `on_checkpoint` every
    /// `checkpoint_every` steps.
    pub fn run_until(
        &mut self,
        until: u64,
        mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<(), TrainError>,
    ) -> Result<Vec<MetricsRow>, TrainError> {
        let mut rows = Vec::with_capacity(until.saturating_sub(self.state.step) as usize);
        while self.state.step < until {
            let row = self.step()?;
            log::debug!("step {} loss {:.6}", row.step, row.loss.total);
            rows.push(row);
            let every = self.config.checkpoint_every;
            if every > 0 && self.state.step % every == 0 {
                on_checkpoint(&self.state)?;
            }
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub metrics: Vec<MetricsRow>,
}

/// Trains from scratch for `config.steps` steps. Periodic checkpoints go to
/// `checkpoint_path` (overwritten each time) when given.
pub fn train_loop(
    dataset: &Dataset,
    model_config: ModelConfig,
    config: TrainConfig,
    checkpoint_path: Option<&Path>,
) -> Result<TrainOutcome, TrainError> {
    let steps = config.steps;
    let mut trainer = Trainer::new(dataset, model_config, config)?;
    let metrics = trainer.run_until(steps, |ck| match checkpoint_path {
        Some(path) => save_checkpoint(ck, path).map_err(TrainError::from),
        None => Ok(()),
    })?;
    Ok(TrainOutcome {
        checkpoint: trainer.into_checkpoint(),
        metrics,
    })
}
