//! Binary checkpoint container.
//!
//! Layout: `PNET`, version (u32 LE), metadata length (u32 LE), UTF-8 JSON
//! metadata, every tensor as little-endian f32 in metadata order, then a
//! CRC32 (u32 LE) over all preceding bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contour::ContourNet;
use crate::model::{Model, ModelConfig};
use crate::nn::{Adam, AdamConfig, ParamSet};
use crate::texture::TextureNet;

use super::TrainConfig;

pub const MAGIC: &[u8; 4] = b"PNET";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("VersionMismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("CorruptFile: {0}")]
    CorruptFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CheckpointError {
    pub fn name(&self) -> &'static str {
        match self {
            CheckpointError::VersionMismatch { .. } => "VersionMismatch",
            CheckpointError::CorruptFile(_) => "CorruptFile",
            CheckpointError::Io { .. } => "IoError",
        }
    }
}

/// Adam state for both subnets; they always step together.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub contour: Adam<f32>,
    pub texture: Adam<f32>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, model: &Model<f32>) -> Self {
        OptimizerState {
            contour: Adam::new(config, model.contour.params()),
            texture: Adam::new(config, model.texture.params()),
        }
    }

    pub fn step(&mut self, model: &mut Model<f32>, contour_grads: &ParamSet<f32>, texture_grads: &ParamSet<f32>) {
        self.contour.step(model.contour.params_mut(), contour_grads);
        self.texture.step(model.texture.params_mut(), texture_grads);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub optimizer: Option<OptimizerState>,
    /// Number of optimizer steps already applied.
    pub step: u64,
    pub train_config: Option<TrainConfig>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorMeta {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerMeta {
    config: AdamConfig,
    steps: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Metadata {
    model: ModelConfig,
    labels: Vec<String>,
    step: u64,
    train: Option<TrainConfig>,
    optimizer: Option<OptimizerMeta>,
    tensors: Vec<TensorMeta>,
}

impl Checkpoint {
    pub fn from_model(model: Model<f32>) -> Self {
        Checkpoint {
            model,
            optimizer: None,
            step: 0,
            train_config: None,
        }
    }

    /// Tensors in file order: contour, texture, then Adam moments if present.
    fn tensors(&self) -> Vec<(String, &[usize], &[f32])> {
        let mut sets: Vec<(&str, &ParamSet<f32>)> = vec![("", self.model.contour.params()), ("", self.model.texture.params())];
        if let Some(opt) = &self.optimizer {
            sets.push(("adam.m.", &opt.contour.first_moment));
            sets.push(("adam.v.", &opt.contour.second_moment));
            sets.push(("adam.m.", &opt.texture.first_moment));
            sets.push(("adam.v.", &opt.texture.second_moment));
        }
        sets.into_iter()
            .flat_map(|(prefix, set)| {
                set.iter()
                    .map(move |p| (format!("{prefix}{}", p.name), p.shape.as_slice(), p.data.as_slice()))
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let tensors = self.tensors();
        let meta = Metadata {
            model: self.model.config().clone(),
            labels: self.model.labels().to_vec(),
            step: self.step,
            train: self.train_config.clone(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerMeta {
                config: o.contour.config,
                steps: o.contour.steps,
            }),
            tensors: tensors
                .iter()
                .map(|(name, shape, _)| TensorMeta {
                    name: name.clone(),
                    shape: shape.to_vec(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&meta).expect("checkpoint metadata serializes");
        let payload: usize = tensors.iter().map(|(_, _, d)| d.len() * 4).sum();
        let mut out = Vec::with_capacity(16 + json.len() + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, _, data) in &tensors {
            for v in *data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let corrupt = |m: &str| CheckpointError::CorruptFile(m.to_string());
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(corrupt("not a checkpoint (bad magic or too short)"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let json_len = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
        let json = body
            .get(12..12 + json_len)
            .ok_or_else(|| corrupt("metadata length exceeds file"))?;
        let meta: Metadata =
            serde_json::from_slice(json).map_err(|e| CheckpointError::CorruptFile(format!("metadata: {e}")))?;
        let mut payload = &body[12 + json_len..];

        let model_err = |e: crate::ModelError| CheckpointError::CorruptFile(e.to_string());
        let mut contour = ContourNet::<f32>::zeroed(meta.model.contour.clone()).map_err(model_err)?;
        let mut texture = TextureNet::<f32>::zeroed(meta.model.texture.clone()).map_err(model_err)?;
        let mut opt = match &meta.optimizer {
            Some(o) => {
                let mut c = Adam::new(o.config, contour.params());
                let mut t = Adam::new(o.config, texture.params());
                c.steps = o.steps;
                t.steps = o.steps;
                Some(OptimizerState { contour: c, texture: t })
            }
            None => None,
        };

        let mut targets: Vec<(&str, &mut ParamSet<f32>)> = vec![("", contour.params_mut()), ("", texture.params_mut())];
        if let Some(o) = opt.as_mut() {
            targets.push(("adam.m.", &mut o.contour.first_moment));
            targets.push(("adam.v.", &mut o.contour.second_moment));
            targets.push(("adam.m.", &mut o.texture.first_moment));
            targets.push(("adam.v.", &mut o.texture.second_moment));
        }
        let mut metas = meta.tensors.iter();
        for (prefix, set) in targets {
            for p in set.iter_mut() {
                let m = metas.next().ok_or_else(|| corrupt("fewer tensors than the configs require"))?;
                if m.name != format!("{prefix}{}", p.name) || m.shape != p.shape {
                    return Err(CheckpointError::CorruptFile(format!(
                        "tensor {} {:?} does not match expected {prefix}{} {:?}",
                        m.name, m.shape, p.name, p.shape
                    )));
                }
                let n = p.data.len() * 4;
                if payload.len() < n {
                    return Err(corrupt("tensor payload truncated"));
                }
                for (v, chunk) in p.data.iter_mut().zip(payload[..n].chunks_exact(4)) {
                    *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                }
                payload = &payload[n..];
            }
        }
        if metas.next().is_some() || !payload.is_empty() {
            return Err(corrupt("trailing tensor data"));
        }
        let model = Model::from_parts(meta.model, meta.labels, contour, texture).map_err(model_err)?;
        Ok(Checkpoint {
            model,
            optimizer: opt,
            step: meta.step,
            train_config: meta.train,
        })
    }
}

pub fn save_checkpoint(checkpoint: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, checkpoint.to_bytes()).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::ContourConfig;
    use crate::dsp::StftGeometry;
    use crate::texture::TextureConfig;

    fn tiny_model() -> Model<f32> {
        let geometry = StftGeometry { sample_rate: 16000, n_fft: 32, hop: 8 };
        let config = ModelConfig {
            geometry,
            pitch_min: 60,
            pitch_max: 63,
            contour: ContourConfig {
                in_channels: 4,
                out_channels: 17,
                encoder_widths: vec![3, 3],
                kernel: 3,
                condition_dim: 2,
            },
            texture: TextureConfig { num_bands: 2, blocks_per_band: 1, hidden: 2 },
        };
        Model::init(config, vec!["a".into(), "b".into()], 9).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let mut ck = Checkpoint::from_model(tiny_model());
        ck.step = 17;
        let mut opt = OptimizerState::new(AdamConfig::default(), &ck.model);
        let g_c = ck.model.contour.params().clone();
        let g_t = ck.model.texture.params().clone();
        opt.step(&mut ck.model, &g_c, &g_t);
        ck.optimizer = Some(opt);
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
    }

    #[test]
    fn flipped_payload_byte_is_corrupt() {
        let mut bytes = Checkpoint::from_model(tiny_model()).to_bytes();
        let i = bytes.len() - 10;
        bytes[i] ^= 0x01;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(CheckpointError::CorruptFile(_))));
    }

    #[test]
    fn newer_version_is_rejected() {
        let mut bytes = Checkpoint::from_model(tiny_model()).to_bytes();
        bytes[4..8].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn garbage_is_corrupt() {
        assert!(matches!(Checkpoint::from_bytes(b"PNE"), Err(CheckpointError::CorruptFile(_))));
        assert!(matches!(Checkpoint::from_bytes(&[0u8; 64]), Err(CheckpointError::CorruptFile(_))));
    }
}
