//! Convolutional encoder/decoder mapping a binary pianoroll to a coarse
//! magnitude spectrogram.
//!
//! Pitch rows are input channels and frequency bins are output channels;
//! all convolutions run along time. Each encoder stage is a stride-2
//! convolution followed by ELU. The decoder mirrors it with stride-2
//! transposed convolutions, concatenating the matching encoder activation
//! (or the input roll, at full resolution) after each stage. A final 1×1
//! convolution and softplus produce non-negative magnitudes.

use serde::{Deserialize, Serialize};

use crate::dsp::{Spectrogram, StftGeometry};
use crate::midi::Pianoroll;
use crate::nn::{
    conv1d_backward, conv1d_forward, conv_transpose1d_backward, conv_transpose1d_forward,
    elu_backward_in_place, elu_in_place, gemm, sigmoid, softplus, Conv1dGeometry, ParamSet,
    Scalar,
};
use crate::ModelError;

pub const DEFAULT_ENCODER_WIDTHS: [usize; 4] = [256, 384, 512, 512];
pub const DEFAULT_KERNEL: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContourConfig {
    /// Pianoroll rows.
    pub in_channels: usize,
    /// Spectrogram bins, `n_fft / 2 + 1`.
    pub out_channels: usize,
    pub encoder_widths: Vec<usize>,
    pub kernel: usize,
    /// Length of the one-hot condition vector; 0 disables conditioning.
    pub condition_dim: usize,
}

impl ContourConfig {
    pub fn new(in_channels: usize, out_channels: usize, condition_dim: usize) -> Self {
        ContourConfig {
            in_channels,
            out_channels,
            encoder_widths: DEFAULT_ENCODER_WIDTHS.to_vec(),
            kernel: DEFAULT_KERNEL,
            condition_dim,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(format!("contour: {m}")));
        if self.in_channels == 0 || self.out_channels == 0 {
            return bad("channel counts must be positive");
        }
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return bad("encoder widths must be non-empty and positive");
        }
        if self.encoder_widths.len() > 16 {
            return bad("at most 16 encoder stages");
        }
        if self.kernel % 2 == 0 {
            return bad("kernel must be odd");
        }
        Ok(())
    }

    /// Time lengths are padded to a multiple of this.
    pub fn pad_factor(&self) -> usize {
        1 << self.encoder_widths.len()
    }

    fn stages(&self) -> usize {
        self.encoder_widths.len()
    }

    /// Output channels of decoder level `l` (1-based, `l = stages()` is first).
    fn decoder_out(&self, level: usize) -> usize {
        if level >= 2 {
            self.encoder_widths[level - 2]
        } else {
            self.encoder_widths[0]
        }
    }

    /// Channels of encoder activation `h[i]`; `h[0]` is the input roll.
    fn encoder_channels(&self, i: usize) -> usize {
        if i == 0 {
            self.in_channels
        } else {
            self.encoder_widths[i - 1]
        }
    }

    fn decoder_in(&self, level: usize) -> usize {
        if level == self.stages() {
            self.encoder_widths[self.stages() - 1] + self.condition_dim
        } else {
            self.decoder_out(level + 1) + self.encoder_channels(level)
        }
    }

    fn head_in(&self) -> usize {
        self.decoder_out(1) + self.in_channels
    }
}

/// Validated one-hot identity vector (instrument or performer).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionVector {
    index: usize,
    dim: usize,
}

impl ConditionVector {
    pub fn one_hot(dim: usize, index: usize) -> Result<Self, ModelError> {
        if index >= dim {
            return Err(ModelError::InvalidConfig(format!(
                "condition index {index} out of range for dimension {dim}"
            )));
        }
        Ok(ConditionVector { index, dim })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn to_vec<T: Scalar>(&self) -> Vec<T> {
        let mut v = vec![T::zero(); self.dim];
        v[self.index] = T::one();
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourNet<T> {
    config: ContourConfig,
    params: ParamSet<T>,
}

/// Activations kept from a forward pass for [`ContourNet::backward`].
pub struct ContourPass<T> {
    /// Coarse magnitudes, `out_channels × frames`.
    pub output: Vec<T>,
    pub frames: usize,
    padded: usize,
    encoder_acts: Vec<Vec<T>>,
    encoder_cols: Vec<Vec<T>>,
    decoder_inputs: Vec<Vec<T>>,
    decoder_acts: Vec<Vec<T>>,
    head_input: Vec<T>,
    head_pre: Vec<T>,
}

impl<T: Scalar> ContourNet<T> {
    /// Parameter layout with all tensors zero.
    pub fn zeroed(config: ContourConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let mut params = ParamSet::new();
        let k = config.kernel;
        for i in 0..config.stages() {
            let c_in = config.encoder_channels(i);
            let c_out = config.encoder_widths[i];
            params.push(format!("contour.enc{i}.weight"), vec![c_out, c_in, k], c_in * k);
            params.push(format!("contour.enc{i}.bias"), vec![c_out], c_in * k);
        }
        for level in (1..=config.stages()).rev() {
            let c_in = config.decoder_in(level);
            let c_out = config.decoder_out(level);
            params.push(format!("contour.dec{level}.weight"), vec![c_in, c_out, k], c_in * k);
            params.push(format!("contour.dec{level}.bias"), vec![c_out], c_in * k);
        }
        let head_in = config.head_in();
        params.push("contour.head.weight", vec![config.out_channels, head_in], head_in);
        params.push("contour.head.bias", vec![config.out_channels], head_in);
        Ok(ContourNet { config, params })
    }

    /// Uniform `±sqrt(1/fan_in)` initialization from a seeded ChaCha stream.
    pub fn init(config: ContourConfig, seed: u64) -> Result<Self, ModelError> {
        let mut net = Self::zeroed(config)?;
        net.params.init_uniform(seed);
        Ok(net)
    }

    pub fn from_params(config: ContourConfig, params: ParamSet<T>) -> Result<Self, ModelError> {
        let reference = Self::zeroed(config)?;
        if !reference.params.same_layout(&params) {
            return Err(ModelError::ShapeMismatch(
                "contour tensors do not match the configuration".into(),
            ));
        }
        if !params.all_finite() {
            return Err(ModelError::InvalidConfig("contour weights are not finite".into()));
        }
        Ok(ContourNet {
            config: reference.config,
            params,
        })
    }

    pub fn config(&self) -> &ContourConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> ContourNet<U> {
        ContourNet {
            config: self.config.clone(),
            params: self.params.cast(),
        }
    }

    fn enc_index(&self, i: usize) -> (usize, usize) {
        (2 * i, 2 * i + 1)
    }

    fn dec_index(&self, level: usize) -> (usize, usize) {
        let base = 2 * self.config.stages() + 2 * (self.config.stages() - level);
        (base, base + 1)
    }

    fn head_index(&self) -> (usize, usize) {
        let base = 4 * self.config.stages();
        (base, base + 1)
    }

    fn encoder_geometry(&self, i: usize, len: usize) -> Conv1dGeometry {
        Conv1dGeometry {
            channels: self.config.encoder_channels(i),
            len_in: len,
            kernel: self.config.kernel,
            stride: 2,
            pad: self.config.kernel / 2,
        }
    }

    fn decoder_geometry(&self, level: usize, len_out: usize) -> Conv1dGeometry {
        Conv1dGeometry {
            channels: self.config.decoder_out(level),
            len_in: len_out,
            kernel: self.config.kernel,
            stride: 2,
            pad: self.config.kernel / 2,
        }
    }

    /// `input` is `in_channels × frames`, row-major. Frames are zero-padded to
    /// a multiple of [`ContourConfig::pad_factor`] and the output cropped back.
    pub fn forward(
        &self,
        input: &[T],
        frames: usize,
        condition: Option<&ConditionVector>,
    ) -> Result<ContourPass<T>, ModelError> {
        let cfg = &self.config;
        if frames == 0 || input.len() != cfg.in_channels * frames {
            return Err(ModelError::ShapeMismatch(format!(
                "contour input has {} values, expected {} x {frames} (frames > 0)",
                input.len(),
                cfg.in_channels
            )));
        }
        let cond: Option<Vec<T>> = match (cfg.condition_dim, condition) {
            (0, None) => None,
            (0, Some(_)) => {
                return Err(ModelError::ShapeMismatch(
                    "condition vector given but conditioning is disabled".into(),
                ))
            }
            (_, None) => return Err(ModelError::MissingCondition),
            (k, Some(c)) if c.dim() != k => {
                return Err(ModelError::ShapeMismatch(format!(
                    "condition vector has length {}, expected {k}",
                    c.dim()
                )))
            }
            (_, Some(c)) => Some(c.to_vec()),
        };

        let factor = cfg.pad_factor();
        let padded = frames.div_ceil(factor) * factor;
        let mut x0 = vec![T::zero(); cfg.in_channels * padded];
        for (dst, src) in x0.chunks_mut(padded).zip(input.chunks(frames)) {
            dst[..frames].copy_from_slice(src);
        }

        let n = cfg.stages();
        let mut encoder_acts = Vec::with_capacity(n + 1);
        let mut encoder_cols = Vec::with_capacity(n);
        encoder_acts.push(x0);
        let mut len = padded;
        for i in 0..n {
            let g = self.encoder_geometry(i, len);
            let (w, b) = self.enc_index(i);
            let (mut y, col) = conv1d_forward(
                &encoder_acts[i],
                g,
                self.params.get(w),
                self.params.get(b),
                cfg.encoder_widths[i],
            );
            elu_in_place(&mut y);
            encoder_cols.push(col);
            encoder_acts.push(y);
            len = g.len_out();
        }

        // Bottleneck latent, optionally extended by the broadcast condition.
        let mut d = encoder_acts[n].clone();
        if let Some(c) = &cond {
            for &v in c {
                d.extend(std::iter::repeat_n(v, len));
            }
        }

        let mut decoder_inputs = vec![Vec::new(); n];
        let mut decoder_acts = vec![Vec::new(); n];
        for level in (1..=n).rev() {
            let out_len = len * 2;
            let g = self.decoder_geometry(level, out_len);
            let (w, b) = self.dec_index(level);
            let mut y = conv_transpose1d_forward(
                &d,
                cfg.decoder_in(level),
                g,
                self.params.get(w),
                self.params.get(b),
            );
            elu_in_place(&mut y);
            let mut next = y.clone();
            next.extend_from_slice(&encoder_acts[level - 1]);
            decoder_inputs[level - 1] = std::mem::replace(&mut d, next);
            decoder_acts[level - 1] = y;
            len = out_len;
        }

        let (w, b) = self.head_index();
        let head_in = cfg.head_in();
        let mut head_pre = vec![T::zero(); cfg.out_channels * padded];
        for (row, &bias) in head_pre.chunks_mut(padded).zip(self.params.get(b)) {
            row.fill(bias);
        }
        gemm(cfg.out_channels, head_in, padded, self.params.get(w), false, &d, false, &mut head_pre, true);
        let mut output = Vec::with_capacity(cfg.out_channels * frames);
        for row in head_pre.chunks(padded) {
            output.extend(row[..frames].iter().map(|&v| softplus(v)));
        }

        Ok(ContourPass {
            output,
            frames,
            padded,
            encoder_acts,
            encoder_cols,
            decoder_inputs,
            decoder_acts,
            head_input: d,
            head_pre,
        })
    }

    /// Backpropagates `d_output` (`out_channels × frames`), accumulating into
    /// `grads`; returns the input gradient when requested.
    pub fn backward(
        &self,
        pass: &ContourPass<T>,
        d_output: &[T],
        grads: &mut ParamSet<T>,
        need_input_grad: bool,
    ) -> Option<Vec<T>> {
        let cfg = &self.config;
        let (frames, padded) = (pass.frames, pass.padded);
        assert_eq!(d_output.len(), cfg.out_channels * frames, "gradient shape");
        let n = cfg.stages();

        let mut d_pre = vec![T::zero(); cfg.out_channels * padded];
        for ((dst, src), pre) in d_pre
            .chunks_mut(padded)
            .zip(d_output.chunks(frames))
            .zip(pass.head_pre.chunks(padded))
        {
            for t in 0..frames {
                dst[t] = src[t] * sigmoid(pre[t]);
            }
        }
        let (w, b) = self.head_index();
        let head_in = cfg.head_in();
        gemm(cfg.out_channels, padded, head_in, &d_pre, false, &pass.head_input, true, grads.get_mut(w), true);
        for (db, row) in grads.get_mut(b).iter_mut().zip(d_pre.chunks(padded)) {
            *db += row.iter().copied().sum::<T>();
        }
        let mut dd = vec![T::zero(); head_in * padded];
        gemm(head_in, cfg.out_channels, padded, self.params.get(w), true, &d_pre, false, &mut dd, false);

        let mut d_enc: Vec<Vec<T>> = pass
            .encoder_acts
            .iter()
            .map(|a| vec![T::zero(); a.len()])
            .collect();
        let mut len = padded;
        for level in 1..=n {
            let out_ch = cfg.decoder_out(level);
            let split = out_ch * len;
            for (acc, &g) in d_enc[level - 1].iter_mut().zip(&dd[split..]) {
                *acc += g;
            }
            let mut da = dd[..split].to_vec();
            elu_backward_in_place(&mut da, &pass.decoder_acts[level - 1]);
            let g = self.decoder_geometry(level, len);
            let (w, b) = self.dec_index(level);
            let (dw, db) = grads_pair(grads, w, b);
            dd = conv_transpose1d_backward(
                &da,
                &pass.decoder_inputs[level - 1],
                cfg.decoder_in(level),
                g,
                self.params.get(w),
                dw,
                db,
            );
            len /= 2;
        }
        let latent = cfg.encoder_widths[n - 1] * len;
        for (acc, &g) in d_enc[n].iter_mut().zip(&dd[..latent]) {
            *acc += g;
        }

        let mut len_in = padded >> (n - 1);
        for i in (0..n).rev() {
            let mut dpre = std::mem::take(&mut d_enc[i + 1]);
            elu_backward_in_place(&mut dpre, &pass.encoder_acts[i + 1]);
            let g = self.encoder_geometry(i, len_in);
            let (w, b) = self.enc_index(i);
            let (dw, db) = grads_pair(grads, w, b);
            let dx = conv1d_backward(
                &dpre,
                &pass.encoder_cols[i],
                g,
                self.params.get(w),
                cfg.encoder_widths[i],
                dw,
                db,
                i > 0 || need_input_grad,
            );
            if let Some(dx) = dx {
                for (acc, g) in d_enc[i].iter_mut().zip(dx) {
                    *acc += g;
                }
            }
            len_in *= 2;
        }

        need_input_grad.then(|| {
            let mut out = Vec::with_capacity(cfg.in_channels * frames);
            for row in d_enc[0].chunks(padded) {
                out.extend_from_slice(&row[..frames]);
            }
            out
        })
    }
}

/// Disjoint mutable borrows of two gradient tensors.
fn grads_pair<T: Scalar>(grads: &mut ParamSet<T>, w: usize, b: usize) -> (&mut [T], &mut [T]) {
    assert!(w < b);
    let mut it = grads.iter_mut().skip(w);
    let wp = it.next().expect("weight index");
    let bp = it.nth(b - w - 1).expect("bias index");
    (&mut wp.data, &mut bp.data)
}

/// Coarse spectrogram for a roll, using `f32` weights.
pub fn contour_forward(
    roll: &Pianoroll,
    condition: Option<&ConditionVector>,
    net: &ContourNet<f32>,
    geometry: StftGeometry,
) -> Result<Spectrogram, ModelError> {
    if net.config().in_channels != roll.pitches() {
        return Err(ModelError::ShapeMismatch(format!(
            "roll has {} pitch rows, network expects {}",
            roll.pitches(),
            net.config().in_channels
        )));
    }
    if net.config().out_channels != geometry.bins() {
        return Err(ModelError::ShapeMismatch(format!(
            "network emits {} bins, geometry has {}",
            net.config().out_channels,
            geometry.bins()
        )));
    }
    let input: Vec<f32> = roll.data().iter().map(|&c| c as f32).collect();
    let pass = net.forward(&input, roll.frames(), condition)?;
    let values = pass.output.iter().map(|&v| v as f64).collect();
    Spectrogram::new(geometry, roll.frames(), values).map_err(|e| ModelError::NonFinite(e.to_string()))
}
