//! Log-spectral distance between predictions and targets.

use std::ops::Range;

use serde::Serialize;

use crate::dsp::Spectrogram;
use crate::model::Model;
use crate::ModelError;

use super::dataset::Dataset;
use super::TrainError;

/// `mean_t sqrt(mean_f (ln(1+pred) − ln(1+target))²)`.
pub fn log_spectral_distance(pred: &Spectrogram, target: &Spectrogram) -> Result<f64, ModelError> {
    if pred.bins() != target.bins() || pred.frames() != target.frames() {
        return Err(ModelError::ShapeMismatch(format!(
            "prediction {}x{} vs target {}x{}",
            pred.bins(),
            pred.frames(),
            target.bins(),
            target.frames()
        )));
    }
    let (bins, frames) = (pred.bins(), pred.frames());
    let mut per_frame = vec![0.0; frames];
    for (p_row, t_row) in pred.values().chunks_exact(frames).zip(target.values().chunks_exact(frames)) {
        for ((acc, p), t) in per_frame.iter_mut().zip(p_row).zip(t_row) {
            let d = p.ln_1p() - t.ln_1p();
            *acc += d * d;
        }
    }
    Ok(per_frame.iter().map(|s| (s / bins as f64).sqrt()).sum::<f64>() / frames as f64)
}

/// Mean squared log error restricted to a bin range.
pub fn band_log_mse(pred: &Spectrogram, target: &Spectrogram, bins: Range<usize>) -> f64 {
    let frames = pred.frames();
    let a = &pred.values()[bins.start * frames..bins.end * frames];
    let b = &target.values()[bins.start * frames..bins.end * frames];
    super::loss::log_mse(a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub source: String,
    pub frames: usize,
    pub lsd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    pub mean: f64,
    pub std_dev: f64,
}

impl EvalReport {
    pub fn from_rows(rows: Vec<EvalRow>) -> Self {
        let n = rows.len() as f64;
        let (mean, std_dev) = if rows.is_empty() {
            (0.0, 0.0)
        } else {
            let mean = rows.iter().map(|r| r.lsd).sum::<f64>() / n;
            let var = rows.iter().map(|r| (r.lsd - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        };
        EvalReport { rows, mean, std_dev }
    }
}

/// LSD of the refined output for every pair.
pub fn evaluate(model: &Model<f32>, dataset: &Dataset) -> Result<EvalReport, TrainError> {
    let mut rows = Vec::with_capacity(dataset.len());
    for pair in &dataset.pairs {
        let pred = model.predict(&pair.roll, pair.instrument)?;
        rows.push(EvalRow {
            source: pair.source.clone(),
            frames: pair.frames(),
            lsd: log_spectral_distance(&pred.refined, &pair.target)?,
        });
    }
    Ok(EvalReport::from_rows(rows))
}
