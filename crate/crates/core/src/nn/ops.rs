use super::{gemm, Scalar};

/// Shape of a 1-D convolution over `(channels, length)` signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dGeometry {
    pub channels: usize,
    pub len_in: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl Conv1dGeometry {
    pub fn len_out(&self) -> usize {
        (self.len_in + 2 * self.pad - self.kernel) / self.stride + 1
    }
}

/// `col[(c*K + j) * L_out + t] = x[c, t*stride + j - pad]` (zero outside).
fn im2col<T: Scalar>(x: &[T], g: Conv1dGeometry) -> Vec<T> {
    let len_out = g.len_out();
    let mut col = vec![T::zero(); g.channels * g.kernel * len_out];
    for c in 0..g.channels {
        let xs = &x[c * g.len_in..(c + 1) * g.len_in];
        for j in 0..g.kernel {
            let row = &mut col[(c * g.kernel + j) * len_out..(c * g.kernel + j + 1) * len_out];
            for (t, slot) in row.iter_mut().enumerate() {
                let pos = (t * g.stride + j) as isize - g.pad as isize;
                if pos >= 0 && (pos as usize) < g.len_in {
                    *slot = xs[pos as usize];
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters columns back, accumulating into `x`.
fn col2im<T: Scalar>(col: &[T], g: Conv1dGeometry, x: &mut [T]) {
    let len_out = g.len_out();
    for c in 0..g.channels {
        let xs = &mut x[c * g.len_in..(c + 1) * g.len_in];
        for j in 0..g.kernel {
            let row = &col[(c * g.kernel + j) * len_out..(c * g.kernel + j + 1) * len_out];
            for (t, &v) in row.iter().enumerate() {
                let pos = (t * g.stride + j) as isize - g.pad as isize;
                if pos >= 0 && (pos as usize) < g.len_in {
                    xs[pos as usize] += v;
                }
            }
        }
    }
}

/// Strided 1-D convolution. Weight is `(c_out, c_in, K)`; returns `(y, col)`
/// where `col` is kept for the backward pass.
pub fn conv1d_forward<T: Scalar>(
    x: &[T],
    g: Conv1dGeometry,
    weight: &[T],
    bias: &[T],
    c_out: usize,
) -> (Vec<T>, Vec<T>) {
    let len_out = g.len_out();
    let col = im2col(x, g);
    let mut y = vec![T::zero(); c_out * len_out];
    for (o, row) in y.chunks_mut(len_out).enumerate() {
        row.fill(bias[o]);
    }
    gemm(c_out, g.channels * g.kernel, len_out, weight, false, &col, false, &mut y, true);
    (y, col)
}

/// Accumulates weight/bias gradients; returns the input gradient when asked.
#[allow(clippy::too_many_arguments)]
pub fn conv1d_backward<T: Scalar>(
    dy: &[T],
    col: &[T],
    g: Conv1dGeometry,
    weight: &[T],
    c_out: usize,
    dweight: &mut [T],
    dbias: &mut [T],
    need_input_grad: bool,
) -> Option<Vec<T>> {
    let len_out = g.len_out();
    let ck = g.channels * g.kernel;
    gemm(c_out, len_out, ck, dy, false, col, true, dweight, true);
    for (o, row) in dy.chunks(len_out).enumerate() {
        dbias[o] += row.iter().copied().sum::<T>();
    }
    if !need_input_grad {
        return None;
    }
    let mut dcol = vec![T::zero(); ck * len_out];
    gemm(ck, c_out, len_out, weight, true, dy, false, &mut dcol, false);
    let mut dx = vec![T::zero(); g.channels * g.len_in];
    col2im(&dcol, g, &mut dx);
    Some(dx)
}

/// Transposed convolution, the adjoint of a strided convolution whose
/// input is the `(c_out, len_out)` output here. Weight is `(c_in, c_out, K)`.
/// `g` describes that adjoint convolution (`g.channels = c_out`,
/// `g.len_in = len_out`, and `g.len_out()` equals this layer's input length).
pub fn conv_transpose1d_forward<T: Scalar>(
    x: &[T],
    c_in: usize,
    g: Conv1dGeometry,
    weight: &[T],
    bias: &[T],
) -> Vec<T> {
    let len_in = g.len_out();
    let ck = g.channels * g.kernel;
    let mut cols = vec![T::zero(); ck * len_in];
    gemm(ck, c_in, len_in, weight, true, x, false, &mut cols, false);
    let mut y = vec![T::zero(); g.channels * g.len_in];
    for (o, row) in y.chunks_mut(g.len_in).enumerate() {
        row.fill(bias[o]);
    }
    col2im(&cols, g, &mut y);
    y
}

#[allow(clippy::too_many_arguments)]
pub fn conv_transpose1d_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    c_in: usize,
    g: Conv1dGeometry,
    weight: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let len_in = g.len_out();
    let ck = g.channels * g.kernel;
    let dcols = im2col(dy, g);
    gemm(c_in, len_in, ck, x, false, &dcols, true, dweight, true);
    for (o, row) in dy.chunks(g.len_in).enumerate() {
        dbias[o] += row.iter().copied().sum::<T>();
    }
    let mut dx = vec![T::zero(); c_in * len_in];
    gemm(c_in, ck, len_in, weight, false, &dcols, false, &mut dx, false);
    dx
}

/// Exponential linear unit, `x` for `x > 0`, `e^x - 1` otherwise.
pub fn elu_in_place<T: Scalar>(x: &mut [T]) {
    for v in x {
        if *v <= T::zero() {
            *v = v.exp_m1();
        }
    }
}

/// Multiplies `grad` by the ELU derivative, written in terms of the output `y`.
pub fn elu_backward_in_place<T: Scalar>(grad: &mut [T], y: &[T]) {
    for (g, &out) in grad.iter_mut().zip(y) {
        if out <= T::zero() {
            *g = *g * (out + T::one());
        }
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus<T: Scalar>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `out[x] += w * inp[x + dx]` over the valid overlap of two rows.
#[inline]
fn axpy_shifted<T: Scalar>(out: &mut [T], inp: &[T], w: T, dx: isize) {
    let width = out.len();
    let (o0, i0, n) = match dx {
        -1 => (1, 0, width - 1),
        0 => (0, 0, width),
        _ => (0, 1, width - 1),
    };
    for (o, &i) in out[o0..o0 + n].iter_mut().zip(&inp[i0..i0 + n]) {
        *o += w * i;
    }
}

#[inline]
fn dot_shifted<T: Scalar>(a: &[T], b: &[T], dx: isize) -> T {
    let width = a.len();
    let (a0, b0, n) = match dx {
        -1 => (1, 0, width - 1),
        0 => (0, 0, width),
        _ => (0, 1, width - 1),
    };
    let mut acc = T::zero();
    for (&x, &y) in a[a0..a0 + n].iter().zip(&b[b0..b0 + n]) {
        acc += x * y;
    }
    acc
}

/// 3×3 convolution with zero padding 1 over `(c_in, height, width)`.
/// Weight is `(c_out, c_in, 3, 3)`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d3_forward<T: Scalar>(
    x: &[T],
    c_in: usize,
    height: usize,
    width: usize,
    weight: &[T],
    bias: &[T],
    c_out: usize,
) -> Vec<T> {
    let plane = height * width;
    let mut y = vec![T::zero(); c_out * plane];
    if width < 2 {
        return conv2d3_forward_narrow(x, c_in, height, width, weight, bias, c_out);
    }
    for o in 0..c_out {
        let out = &mut y[o * plane..(o + 1) * plane];
        out.fill(bias[o]);
        for c in 0..c_in {
            let inp = &x[c * plane..(c + 1) * plane];
            let wk = &weight[(o * c_in + c) * 9..(o * c_in + c + 1) * 9];
            for r in 0..height {
                let out_row = &mut out[r * width..(r + 1) * width];
                for dy in -1isize..=1 {
                    let src = r as isize + dy;
                    if src < 0 || src >= height as isize {
                        continue;
                    }
                    let in_row = &inp[src as usize * width..(src as usize + 1) * width];
                    for dx in -1isize..=1 {
                        let w = wk[((dy + 1) * 3 + dx + 1) as usize];
                        axpy_shifted(out_row, in_row, w, dx);
                    }
                }
            }
        }
    }
    y
}

fn conv2d3_forward_narrow<T: Scalar>(
    x: &[T],
    c_in: usize,
    height: usize,
    width: usize,
    weight: &[T],
    bias: &[T],
    c_out: usize,
) -> Vec<T> {
    let plane = height * width;
    let mut y = vec![T::zero(); c_out * plane];
    for o in 0..c_out {
        for r in 0..height {
            for col in 0..width {
                let mut acc = bias[o];
                for c in 0..c_in {
                    for dy in -1isize..=1 {
                        for dx in -1isize..=1 {
                            let (rr, cc) = (r as isize + dy, col as isize + dx);
                            if rr < 0 || cc < 0 || rr >= height as isize || cc >= width as isize {
                                continue;
                            }
                            acc += weight[(o * c_in + c) * 9 + ((dy + 1) * 3 + dx + 1) as usize]
                                * x[c * plane + rr as usize * width + cc as usize];
                        }
                    }
                }
                y[o * plane + r * width + col] = acc;
            }
        }
    }
    y
}

/// Returns the input gradient and accumulates weight/bias gradients.
#[allow(clippy::too_many_arguments)]
pub fn conv2d3_backward<T: Scalar>(
    dy: &[T],
    x: &[T],
    c_in: usize,
    height: usize,
    width: usize,
    weight: &[T],
    c_out: usize,
    dweight: &mut [T],
    dbias: &mut [T],
) -> Vec<T> {
    let plane = height * width;
    let mut dx_all = vec![T::zero(); c_in * plane];
    if width < 2 {
        conv2d3_backward_narrow(dy, x, c_in, height, width, weight, c_out, dweight, dbias, &mut dx_all);
        return dx_all;
    }
    for o in 0..c_out {
        let g = &dy[o * plane..(o + 1) * plane];
        dbias[o] += g.iter().copied().sum::<T>();
        for c in 0..c_in {
            let inp = &x[c * plane..(c + 1) * plane];
            let dinp = &mut dx_all[c * plane..(c + 1) * plane];
            let base = (o * c_in + c) * 9;
            for r in 0..height {
                let g_row = &g[r * width..(r + 1) * width];
                for dyo in -1isize..=1 {
                    let src = r as isize + dyo;
                    if src < 0 || src >= height as isize {
                        continue;
                    }
                    let s = src as usize * width;
                    for dxo in -1isize..=1 {
                        let k = base + ((dyo + 1) * 3 + dxo + 1) as usize;
                        dweight[k] += dot_shifted(g_row, &inp[s..s + width], dxo);
                        // d in[src, x + dxo] += w * g[r, x]
                        let w = weight[k];
                        axpy_shifted(&mut dinp[s..s + width], g_row, w, -dxo);
                    }
                }
            }
        }
    }
    dx_all
}

#[allow(clippy::too_many_arguments)]
fn conv2d3_backward_narrow<T: Scalar>(
    dy: &[T],
    x: &[T],
    c_in: usize,
    height: usize,
    width: usize,
    weight: &[T],
    c_out: usize,
    dweight: &mut [T],
    dbias: &mut [T],
    dx: &mut [T],
) {
    let plane = height * width;
    for o in 0..c_out {
        for r in 0..height {
            for col in 0..width {
                let g = dy[o * plane + r * width + col];
                dbias[o] += g;
                for c in 0..c_in {
                    for ky in -1isize..=1 {
                        for kx in -1isize..=1 {
                            let (rr, cc) = (r as isize + ky, col as isize + kx);
                            if rr < 0 || cc < 0 || rr >= height as isize || cc >= width as isize {
                                continue;
                            }
                            let k = (o * c_in + c) * 9 + ((ky + 1) * 3 + kx + 1) as usize;
                            let idx = c * plane + rr as usize * width + cc as usize;
                            dweight[k] += g * x[idx];
                            dx[idx] += g * weight[k];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
            })
            .collect()
    }

    fn naive_conv1d(x: &[f64], c_in: usize, len: usize, w: &[f64], b: &[f64], c_out: usize, k: usize, s: usize, p: usize) -> Vec<f64> {
        let len_out = (len + 2 * p - k) / s + 1;
        let mut y = vec![0.0; c_out * len_out];
        for o in 0..c_out {
            for t in 0..len_out {
                let mut acc = b[o];
                for c in 0..c_in {
                    for j in 0..k {
                        let pos = (t * s + j) as isize - p as isize;
                        if pos >= 0 && (pos as usize) < len {
                            acc += w[(o * c_in + c) * k + j] * x[c * len + pos as usize];
                        }
                    }
                }
                y[o * len_out + t] = acc;
            }
        }
        y
    }

    #[test]
    fn conv1d_matches_naive() {
        let (c_in, len, c_out, k) = (3, 10, 4, 5);
        let x = lcg(c_in * len, 1);
        let w = lcg(c_out * c_in * k, 2);
        let b = lcg(c_out, 3);
        for stride in [1, 2] {
            let g = Conv1dGeometry { channels: c_in, len_in: len, kernel: k, stride, pad: 2 };
            let (y, _) = conv1d_forward(&x, g, &w, &b, c_out);
            let expect = naive_conv1d(&x, c_in, len, &w, &b, c_out, k, stride, 2);
            assert_eq!(y.len(), expect.len());
            for (a, e) in y.iter().zip(&expect) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn transposed_conv_is_adjoint_of_strided_conv() {
        // <conv(u), v> == <u, convT(v)> with zero biases and the shared weight.
        let (c_small, c_big, len, k) = (3, 2, 12, 5);
        let g = Conv1dGeometry { channels: c_big, len_in: len, kernel: k, stride: 2, pad: 2 };
        let w = lcg(c_small * c_big * k, 9);
        let u = lcg(c_big * len, 10);
        let v = lcg(c_small * g.len_out(), 11);
        let (cu, _) = conv1d_forward(&u, g, &w, &vec![0.0; c_small], c_small);
        let ctv = conv_transpose1d_forward(&v, c_small, g, &w, &vec![0.0; c_big]);
        let lhs: f64 = cu.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&ctv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        assert_eq!(ctv.len(), c_big * len);
    }

    #[test]
    fn conv2d_wide_and_narrow_paths_agree() {
        let (c_in, h, w, c_out) = (2, 4, 5, 3);
        let x = lcg(c_in * h * w, 4);
        let wt = lcg(c_out * c_in * 9, 5);
        let b = lcg(c_out, 6);
        let fast = conv2d3_forward(&x, c_in, h, w, &wt, &b, c_out);
        let slow = conv2d3_forward_narrow(&x, c_in, h, w, &wt, &b, c_out);
        for (a, e) in fast.iter().zip(&slow) {
            assert!((a - e).abs() < 1e-12);
        }
        let dy = lcg(c_out * h * w, 7);
        let (mut dw1, mut db1) = (vec![0.0; wt.len()], vec![0.0; c_out]);
        let (mut dw2, mut db2) = (vec![0.0; wt.len()], vec![0.0; c_out]);
        let dx1 = conv2d3_backward(&dy, &x, c_in, h, w, &wt, c_out, &mut dw1, &mut db1);
        let mut dx2 = vec![0.0; x.len()];
        conv2d3_backward_narrow(&dy, &x, c_in, h, w, &wt, c_out, &mut dw2, &mut db2, &mut dx2);
        for (a, e) in dx1.iter().chain(&dw1).chain(&db1).zip(dx2.iter().chain(&dw2).chain(&db2)) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn softplus_is_stable_and_positive() {
        assert!((softplus(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(softplus(800.0f64), 800.0);
        assert!(softplus(-800.0f64) >= 0.0);
        assert!(softplus(-30.0f32) > 0.0);
        assert!((sigmoid(0.0f64) - 0.5).abs() < 1e-15);
    }
}
