//! The two subnets plus the metadata needed to run them on a pianoroll.

use serde::{Deserialize, Serialize};

use crate::contour::{ConditionVector, ContourConfig, ContourNet};
use crate::dsp::{Spectrogram, StftGeometry};
use crate::midi::Pianoroll;
use crate::nn::Scalar;
use crate::texture::{TextureConfig, TextureNet};
use crate::ModelError;

const TEXTURE_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub geometry: StftGeometry,
    pub pitch_min: u8,
    pub pitch_max: u8,
    pub contour: ContourConfig,
    pub texture: TextureConfig,
}

impl ModelConfig {
    /// Default architecture for a pitch range and `condition_dim` instruments.
    pub fn new(geometry: StftGeometry, pitch_min: u8, pitch_max: u8, condition_dim: usize) -> Self {
        let pitches = pitch_max.saturating_sub(pitch_min) as usize + 1;
        ModelConfig {
            geometry,
            pitch_min,
            pitch_max,
            contour: ContourConfig::new(pitches, geometry.bins(), condition_dim),
            texture: TextureConfig::default(),
        }
    }

    pub fn pitches(&self) -> usize {
        self.pitch_max.saturating_sub(self.pitch_min) as usize + 1
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.geometry
            .validate_cola()
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))?;
        if self.pitch_min > self.pitch_max || self.pitch_max > 127 {
            return Err(ModelError::InvalidConfig(format!(
                "pitch range {}..={} is invalid",
                self.pitch_min, self.pitch_max
            )));
        }
        if self.contour.in_channels != self.pitches() {
            return Err(ModelError::InvalidConfig(format!(
                "contour expects {} pitch rows but the range has {}",
                self.contour.in_channels,
                self.pitches()
            )));
        }
        if self.contour.out_channels != self.geometry.bins() {
            return Err(ModelError::InvalidConfig(format!(
                "contour emits {} bins but n_fft {} gives {}",
                self.contour.out_channels,
                self.geometry.n_fft,
                self.geometry.bins()
            )));
        }
        if self.texture.num_bands > self.geometry.bins() {
            return Err(ModelError::InvalidBandCount {
                bins: self.geometry.bins(),
                bands: self.texture.num_bands,
            });
        }
        self.contour.validate()?;
        self.texture.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    config: ModelConfig,
    labels: Vec<String>,
    pub contour: ContourNet<T>,
    pub texture: TextureNet<T>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub coarse: Spectrogram,
    pub refined: Spectrogram,
}

impl<T: Scalar> Model<T> {
    pub fn init(config: ModelConfig, labels: Vec<String>, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        check_labels(&config, &labels)?;
        Ok(Model {
            contour: ContourNet::init(config.contour.clone(), seed)?,
            texture: TextureNet::init(config.texture.clone(), seed.wrapping_add(TEXTURE_SEED_OFFSET))?,
            config,
            labels,
        })
    }

    pub fn from_parts(
        config: ModelConfig,
        labels: Vec<String>,
        contour: ContourNet<T>,
        texture: TextureNet<T>,
    ) -> Result<Self, ModelError> {
        config.validate()?;
        check_labels(&config, &labels)?;
        if contour.config() != &config.contour || texture.config() != &config.texture {
            return Err(ModelError::ShapeMismatch("subnet configs differ from model config".into()));
        }
        Ok(Model {
            config,
            labels,
            contour,
            texture,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn frame_rate(&self) -> f64 {
        self.config.geometry.frame_rate()
    }

    /// Index of `label`, or of the first label when `None`.
    pub fn label_index(&self, label: Option<&str>) -> Result<usize, ModelError> {
        match label {
            None if !self.labels.is_empty() || self.config.contour.condition_dim == 0 => Ok(0),
            None => Err(ModelError::UnknownInstrument {
                label: String::new(),
                available: self.labels.clone(),
            }),
            Some(l) => self.labels.iter().position(|x| x == l).ok_or_else(|| {
                ModelError::UnknownInstrument {
                    label: l.to_string(),
                    available: self.labels.clone(),
                }
            }),
        }
    }

    pub fn condition(&self, label_index: usize) -> Result<Option<ConditionVector>, ModelError> {
        match self.config.contour.condition_dim {
            0 => Ok(None),
            k => ConditionVector::one_hot(k, label_index).map(Some),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            labels: self.labels.clone(),
            contour: self.contour.cast(),
            texture: self.texture.cast(),
        }
    }

    /// Checks the frame rate and crops or pads `roll` to the model's pitch range.
    pub fn prepare_roll(&self, roll: &Pianoroll) -> Result<Pianoroll, ModelError> {
        let rate = self.frame_rate();
        if (roll.frame_rate() - rate).abs() > 1e-9 * rate {
            return Err(ModelError::ShapeMismatch(format!(
                "roll frame rate {} differs from the model's {rate}",
                roll.frame_rate()
            )));
        }
        if roll.pitch_min() == self.config.pitch_min && roll.pitch_max() == self.config.pitch_max {
            return Ok(roll.clone());
        }
        roll.with_pitch_range(self.config.pitch_min, self.config.pitch_max)
            .map_err(|e| ModelError::InvalidConfig(e.to_string()))
    }

    /// Runs both subnets on a roll. Rows outside the model's pitch range are
    /// dropped; the roll must be at the spectrogram frame rate.
    pub fn predict(&self, roll: &Pianoroll, label_index: usize) -> Result<Prediction, ModelError> {
        let roll = self.prepare_roll(roll)?;
        let condition = self.condition(label_index)?;
        let input: Vec<T> = roll.data().iter().map(|&c| if c != 0 { T::one() } else { T::zero() }).collect();
        let frames = roll.frames();
        let bins = self.config.geometry.bins();
        let cpass = self.contour.forward(&input, frames, condition.as_ref())?;
        let tpass = self.texture.forward(&cpass.output, bins, frames, false)?;
        let to_spec = |values: &[T]| {
            Spectrogram::new(
                self.config.geometry,
                frames,
                values.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            )
            .map_err(|e| ModelError::NonFinite(e.to_string()))
        };
        Ok(Prediction {
            coarse: to_spec(&cpass.output)?,
            refined: to_spec(&tpass.output)?,
        })
    }
}

fn check_labels(config: &ModelConfig, labels: &[String]) -> Result<(), ModelError> {
    if labels.iter().any(|l| l.is_empty()) {
        return Err(ModelError::InvalidConfig("instrument labels must be non-empty".into()));
    }
    let k = config.contour.condition_dim;
    if k > 0 && labels.len() != k {
        return Err(ModelError::InvalidConfig(format!(
            "{} labels for condition dimension {k}",
            labels.len()
        )));
    }
    Ok(())
}
