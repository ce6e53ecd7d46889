//! Multi-band residual refinement of the coarse spectrogram.
//!
//! Bands are processed low to high. Step `i` computes a residual from the
//! running estimate `S_{i-1}` and adds it only inside band `i`, so the bins
//! of a band change exactly once. The result is clamped at zero.
//!
//! Each band stage chains `blocks_per_band` residual blocks of the form
//! `conv3x3(1→hidden) → ELU → conv3x3(hidden→1)`. A block only reaches
//! one row per convolution, so a stage is evaluated on the band's rows plus
//! a halo of `2 * blocks_per_band` rows; inside the band this equals the
//! full-matrix evaluation exactly.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::nn::{conv2d3_backward, conv2d3_forward, elu_backward_in_place, elu_in_place, ParamSet, Scalar};
use crate::ModelError;

pub const DEFAULT_BANDS: usize = 4;
pub const DEFAULT_BLOCKS_PER_BAND: usize = 2;
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextureConfig {
    pub num_bands: usize,
    pub blocks_per_band: usize,
    pub hidden: usize,
}

impl Default for TextureConfig {
    fn default() -> Self {
        TextureConfig {
            num_bands: DEFAULT_BANDS,
            blocks_per_band: DEFAULT_BLOCKS_PER_BAND,
            hidden: DEFAULT_HIDDEN,
        }
    }
}

impl TextureConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.num_bands == 0 || self.blocks_per_band == 0 || self.hidden == 0 {
            return Err(ModelError::InvalidConfig(
                "texture: bands, blocks and hidden channels must be positive".into(),
            ));
        }
        Ok(())
    }

    fn halo(&self) -> usize {
        2 * self.blocks_per_band
    }
}

/// Contiguous, disjoint bin ranges covering `0..bins`, low frequencies first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandPartition {
    bands: Vec<Range<usize>>,
}

impl BandPartition {
    pub fn bands(&self) -> &[Range<usize>] {
        &self.bands
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.bands.iter().map(|b| b.len()).collect()
    }
}

/// Splits `bins` into `count` bands whose sizes differ by at most one; the
/// larger bands come first.
pub fn band_partition(bins: usize, count: usize) -> Result<BandPartition, ModelError> {
    if count == 0 || count > bins {
        return Err(ModelError::InvalidBandCount { bins, bands: count });
    }
    let base = bins / count;
    let extra = bins % count;
    let mut start = 0;
    let bands = (0..count)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect();
    Ok(BandPartition { bands })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextureNet<T> {
    config: TextureConfig,
    params: ParamSet<T>,
}

struct BlockCache<T> {
    input: Vec<T>,
    hidden: Vec<T>,
}

struct BandCache<T> {
    rows: Range<usize>,
    blocks: Vec<BlockCache<T>>,
}

/// Result of a refinement pass. `output` is clamped; `stages` holds
/// `S_0 ..= S_B` when requested.
pub struct TexturePass<T> {
    pub output: Vec<T>,
    pub pre_clamp: Vec<T>,
    pub stages: Vec<Vec<T>>,
    pub bins: usize,
    pub frames: usize,
    partition: BandPartition,
    caches: Vec<BandCache<T>>,
}

impl<T: Scalar> TextureNet<T> {
    pub fn zeroed(config: TextureConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamSet::new();
        let h = config.hidden;
        for band in 0..config.num_bands {
            for block in 0..config.blocks_per_band {
                let p = format!("texture.band{band}.block{block}");
                params.push(format!("{p}.conv1.weight"), vec![h, 1, 3, 3], 9);
                params.push(format!("{p}.conv1.bias"), vec![h], 9);
                params.push(format!("{p}.conv2.weight"), vec![1, h, 3, 3], 9 * h);
                params.push(format!("{p}.conv2.bias"), vec![1], 9 * h);
            }
        }
        Ok(TextureNet { config, params })
    }

    pub fn init(config: TextureConfig, seed: u64) -> Result<Self, ModelError> {
        let mut net = Self::zeroed(config)?;
        net.params.init_uniform(seed);
        Ok(net)
    }

    pub fn from_params(config: TextureConfig, params: ParamSet<T>) -> Result<Self, ModelError> {
        let reference = Self::zeroed(config)?;
        if !reference.params.same_layout(&params) {
            return Err(ModelError::ShapeMismatch(
                "texture tensors do not match the configuration".into(),
            ));
        }
        if !params.all_finite() {
            return Err(ModelError::InvalidConfig("texture weights are not finite".into()));
        }
        Ok(TextureNet {
            config: reference.config,
            params,
        })
    }

    pub fn config(&self) -> &TextureConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> TextureNet<U> {
        TextureNet {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    fn block_index(&self, band: usize, block: usize) -> usize {
        4 * (band * self.config.blocks_per_band + block)
    }

    /// One residual block on a `rows × frames` slab.
    fn block_forward(&self, base: usize, u: &[T], rows: usize, frames: usize) -> (Vec<T>, Vec<T>) {
        let h = self.config.hidden;
        let mut hidden = conv2d3_forward(u, 1, rows, frames, self.params.get(base), self.params.get(base + 1), h);
        elu_in_place(&mut hidden);
        let out = conv2d3_forward(&hidden, h, rows, frames, self.params.get(base + 2), self.params.get(base + 3), 1);
        (hidden, out)
    }

    /// Refines `coarse` (`bins × frames`, row-major).
    pub fn forward(&self, coarse: &[T], bins: usize, frames: usize, keep_stages: bool) -> Result<TexturePass<T>, ModelError> {
        if frames == 0 || coarse.len() != bins * frames {
            return Err(ModelError::ShapeMismatch(format!(
                "texture input has {} values, expected {bins} x {frames}",
                coarse.len()
            )));
        }
        let partition = band_partition(bins, self.config.num_bands)?;
        let mut s = coarse.to_vec();
        let mut stages = Vec::new();
        if keep_stages {
            stages.push(s.clone());
        }
        let halo = self.config.halo();
        let mut caches = Vec::with_capacity(partition.bands.len());
        for (band, range) in partition.bands.iter().enumerate() {
            let lo = range.start.saturating_sub(halo);
            let hi = (range.end + halo).min(bins);
            let rows = hi - lo;
            let mut u = s[lo * frames..hi * frames].to_vec();
            let mut residual = vec![T::zero(); rows * frames];
            let mut blocks = Vec::with_capacity(self.config.blocks_per_band);
            for block in 0..self.config.blocks_per_band {
                let base = self.block_index(band, block);
                let (hidden, out) = self.block_forward(base, &u, rows, frames);
                let next: Vec<T> = u.iter().zip(&out).map(|(&a, &b)| a + b).collect();
                for (r, &b) in residual.iter_mut().zip(&out) {
                    *r += b;
                }
                blocks.push(BlockCache {
                    input: std::mem::replace(&mut u, next),
                    hidden,
                });
            }
            let offset = (range.start - lo) * frames;
            let band_vals = &mut s[range.start * frames..range.end * frames];
            for (v, &r) in band_vals.iter_mut().zip(&residual[offset..offset + range.len() * frames]) {
                *v += r;
            }
            caches.push(BandCache { rows: lo..hi, blocks });
            if keep_stages {
                stages.push(s.clone());
            }
        }
        let output = s.iter().map(|&v| v.max(T::zero())).collect();
        Ok(TexturePass {
            output,
            pre_clamp: s,
            stages,
            bins,
            frames,
            partition,
            caches,
        })
    }

    /// Backpropagates through the clamp and all band stages, accumulating
    /// into `grads`; returns the gradient with respect to the coarse input.
    pub fn backward(&self, pass: &TexturePass<T>, d_output: &[T], grads: &mut ParamSet<T>) -> Vec<T> {
        let (bins, frames) = (pass.bins, pass.frames);
        assert_eq!(d_output.len(), bins * frames, "gradient shape");
        let h = self.config.hidden;
        let mut ds: Vec<T> = d_output
            .iter()
            .zip(&pass.pre_clamp)
            .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
            .collect();

        for (band, range) in pass.partition.bands.iter().enumerate().rev() {
            let cache = &pass.caches[band];
            let (lo, hi) = (cache.rows.start, cache.rows.end);
            let rows = hi - lo;
            let mut d_res = vec![T::zero(); rows * frames];
            let offset = (range.start - lo) * frames;
            d_res[offset..offset + range.len() * frames]
                .copy_from_slice(&ds[range.start * frames..range.end * frames]);

            // g tracks dL/du_j; u_J itself only feeds the residual sum.
            let mut g = vec![T::zero(); rows * frames];
            for block in (0..self.config.blocks_per_band).rev() {
                let base = self.block_index(band, block);
                let bc = &cache.blocks[block];
                let d_out: Vec<T> = d_res.iter().zip(&g).map(|(&a, &b)| a + b).collect();
                let mut d_hidden = {
                    let (dw, db) = split4(grads, base + 2);
                    conv2d3_backward(&d_out, &bc.hidden, h, rows, frames, self.params.get(base + 2), 1, dw, db)
                };
                elu_backward_in_place(&mut d_hidden, &bc.hidden);
                let d_in = {
                    let (dw, db) = split4(grads, base);
                    conv2d3_backward(&d_hidden, &bc.input, 1, rows, frames, self.params.get(base), h, dw, db)
                };
                for (acc, d) in g.iter_mut().zip(d_in) {
                    *acc += d;
                }
            }
            for (acc, d) in ds[lo * frames..hi * frames].iter_mut().zip(&g) {
                *acc += *d;
            }
        }
        ds
    }
}

fn split4<T: Scalar>(grads: &mut ParamSet<T>, weight: usize) -> (&mut [T], &mut [T]) {
    let mut it = grads.iter_mut().skip(weight);
    let w = it.next().expect("weight tensor");
    let b = it.next().expect("bias tensor");
    (&mut w.data, &mut b.data)
}

/// Refined spectrogram from a coarse one, using `f32` weights.
pub fn texture_forward(coarse: &Spectrogram, net: &TextureNet<f32>) -> Result<Spectrogram, ModelError> {
    let input: Vec<f32> = coarse.values().iter().map(|&v| v as f32).collect();
    let pass = net.forward(&input, coarse.bins(), coarse.frames(), false)?;
    let values = pass.output.iter().map(|&v| v as f64).collect();
    Spectrogram::new(coarse.geometry(), coarse.frames(), values)
        .map_err(|e| ModelError::NonFinite(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    #[test]
    fn partition_examples() {
        let p = band_partition(8, 4).unwrap();
        assert_eq!(p.bands(), &[0..2, 2..4, 4..6, 6..8]);
        assert_eq!(band_partition(513, 4).unwrap().sizes(), vec![129, 128, 128, 128]);
        assert_eq!(band_partition(513, 4).unwrap().bands().last().unwrap().end, 513);
        assert_eq!(band_partition(5, 5).unwrap().sizes(), vec![1; 5]);
        assert!(band_partition(3, 4).is_err());
        assert!(band_partition(3, 0).is_err());
    }

    /// Evaluates every block over the whole matrix, then masks.
    fn full_matrix_reference(net: &TextureNet<f64>, coarse: &[f64], bins: usize, frames: usize) -> Vec<f64> {
        let partition = band_partition(bins, net.config.num_bands).unwrap();
        let mut s = coarse.to_vec();
        for (band, range) in partition.bands().iter().enumerate() {
            let mut u = s.clone();
            let mut residual = vec![0.0; s.len()];
            for block in 0..net.config.blocks_per_band {
                let (_, out) = net.block_forward(net.block_index(band, block), &u, bins, frames);
                for i in 0..u.len() {
                    u[i] += out[i];
                    residual[i] += out[i];
                }
            }
            for i in range.start * frames..range.end * frames {
                s[i] += residual[i];
            }
        }
        s.iter().map(|v| v.max(0.0)).collect()
    }

    #[test]
    fn halo_evaluation_equals_full_matrix() {
        let config = TextureConfig { num_bands: 3, blocks_per_band: 2, hidden: 4 };
        let net = TextureNet::<f64>::init(config, 11).unwrap();
        let (bins, frames) = (23, 7);
        let coarse = noise(bins * frames, 3);
        let pass = net.forward(&coarse, bins, frames, false).unwrap();
        assert_eq!(pass.output, full_matrix_reference(&net, &coarse, bins, frames));
    }

    #[test]
    fn zero_weights_are_identity() {
        let net = TextureNet::<f64>::zeroed(TextureConfig::default()).unwrap();
        let coarse = noise(33 * 5, 9);
        let pass = net.forward(&coarse, 33, 5, false).unwrap();
        assert_eq!(pass.pre_clamp, coarse);
        assert_eq!(pass.output, coarse);
    }

    #[test]
    fn each_stage_touches_only_its_band() {
        let net = TextureNet::<f64>::init(TextureConfig::default(), 2).unwrap();
        let (bins, frames) = (30, 6);
        let coarse = noise(bins * frames, 4);
        let pass = net.forward(&coarse, bins, frames, true).unwrap();
        let partition = band_partition(bins, 4).unwrap();
        for (i, band) in partition.bands().iter().enumerate() {
            let (before, after) = (&pass.stages[i], &pass.stages[i + 1]);
            for bin in 0..bins {
                if band.contains(&bin) {
                    continue;
                }
                for t in 0..frames {
                    assert_eq!(before[bin * frames + t], after[bin * frames + t]);
                }
            }
        }
    }

    #[test]
    fn too_few_bins_is_an_error() {
        let net = TextureNet::<f64>::zeroed(TextureConfig::default()).unwrap();
        assert!(matches!(
            net.forward(&[0.0; 6], 3, 2, false),
            Err(ModelError::InvalidBandCount { .. })
        ));
    }
}
