//! Dataset construction, the training loop, checkpoints and evaluation.

mod checkpoint;
mod dataset;
mod eval;
mod loss;
pub mod synthetic;
mod trainer;

use std::path::Path;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, OptimizerState, FORMAT_VERSION, MAGIC};
pub use dataset::{
    build_dataset, build_pair, Dataset, DatasetManifest, DatasetOptions, ManifestEntry, TrainingPair,
    ALIGNMENT_TOLERANCE,
};
pub use eval::{band_log_mse, evaluate, log_spectral_distance, EvalReport, EvalRow};
pub use loss::{log_mse, loss_and_grad, loss_fn, LossBreakdown, LossWeights};
pub use trainer::{train_loop, write_metrics_csv, MetricsRow, TrainConfig, TrainOutcome, Trainer, METRICS_HEADER};

use crate::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("EmptyDataset: training needs at least one pair")]
    EmptyDataset,
    #[error("NonFiniteLoss: loss or gradient became non-finite at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("AlignmentError: {source_name}: pianoroll has {roll_frames} frames but audio has {spec_frames} (more than 5% apart)")]
    Alignment {
        source_name: String,
        roll_frames: usize,
        spec_frames: usize,
    },
    #[error("manifest line {line}: {reason}")]
    Manifest { line: usize, reason: String },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("{source_name}: {error}")]
    Entry {
        source_name: String,
        error: Box<crate::Error>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TrainError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TrainError::EmptyDataset => "EmptyDataset",
            TrainError::NonFiniteLoss { .. } => "NonFiniteLoss",
            TrainError::Alignment { .. } => "AlignmentError",
            TrainError::Manifest { .. } => "InvalidManifest",
            TrainError::InvalidConfig(_) => "InvalidConfig",
            TrainError::Entry { error, .. } => error.name(),
            TrainError::Model(e) => e.name(),
            TrainError::Checkpoint(e) => e.name(),
            TrainError::Io { .. } => "IoError",
        }
    }
}
