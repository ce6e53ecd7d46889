//! Log-compressed L2 loss with deep supervision on the coarse output.

use serde::{Deserialize, Serialize};

use crate::dsp::Spectrogram;
use crate::nn::Scalar;
use crate::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub coarse: f64,
    pub refined: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            coarse: 0.5,
            refined: 1.0,
        }
    }
}

/// Total loss and its two weighted terms; `total == coarse + refined`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub total: f64,
    pub coarse: f64,
    pub refined: f64,
}

/// Mean of `(ln(1+a) − ln(1+b))²`.
pub fn log_mse(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x.ln_1p() - y.ln_1p();
            d * d
        })
        .sum();
    sum / a.len() as f64
}

pub fn loss_fn(
    coarse: &Spectrogram,
    refined: &Spectrogram,
    target: &Spectrogram,
    weights: LossWeights,
) -> Result<LossBreakdown, ModelError> {
    let shape = |s: &Spectrogram| (s.bins(), s.frames());
    if shape(coarse) != shape(target) || shape(refined) != shape(target) {
        return Err(ModelError::ShapeMismatch(format!(
            "coarse {:?}, refined {:?}, target {:?}",
            shape(coarse),
            shape(refined),
            shape(target)
        )));
    }
    let c = weights.coarse * log_mse(coarse.values(), target.values());
    let r = weights.refined * log_mse(refined.values(), target.values());
    Ok(LossBreakdown {
        total: c + r,
        coarse: c,
        refined: r,
    })
}

/// Loss on raw buffers plus its gradients with respect to both predictions,
/// each scaled by `grad_scale`. `ln(1+x)` is evaluated in the working precision.
pub fn loss_and_grad<T: Scalar>(
    coarse: &[T],
    refined: &[T],
    target: &[T],
    weights: LossWeights,
    grad_scale: f64,
) -> (LossBreakdown, Vec<T>, Vec<T>) {
    let n = target.len();
    assert!(coarse.len() == n && refined.len() == n, "loss inputs differ in length");
    if n == 0 {
        return (LossBreakdown::default(), Vec::new(), Vec::new());
    }
    let inv_n = 1.0 / n as f64;
    let term = |pred: &[T], lambda: f64| -> (f64, Vec<T>) {
        let k = T::lit(2.0 * lambda * inv_n * grad_scale);
        let mut sum = 0.0f64;
        let grad = pred
            .iter()
            .zip(target)
            .map(|(&p, &t)| {
                let d = p.ln_1p() - t.ln_1p();
                let df = d.to_f64().unwrap_or(f64::NAN);
                sum += df * df;
                k * d / (T::one() + p)
            })
            .collect();
        (lambda * sum * inv_n, grad)
    };
    let (c, dc) = term(coarse, weights.coarse);
    let (r, dr) = term(refined, weights.refined);
    (
        LossBreakdown {
            total: c + r,
            coarse: c,
            refined: r,
        },
        dc,
        dr,
    )
}
