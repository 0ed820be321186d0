//! Layer kernels over `[rows, channels]` activation matrices, where a batch
//! of `b` feature maps occupies `b * 49` rows.

use super::Scalar;
use crate::board::SIDE;

const PIXELS: usize = SIDE * SIDE;

/// Top/left padding of a 4x4 "same" convolution; bottom/right get 2.
pub(crate) const PAD_BEFORE: usize = 1;

pub fn leaky_relu<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

pub(crate) fn leaky_relu_inplace<T: Scalar>(xs: &mut [T], slope: T) {
    for x in xs {
        *x = leaky_relu(*x, slope);
    }
}

/// Multiplies `grad` by the activation derivative at `pre`.
pub(crate) fn leaky_relu_backward<T: Scalar>(pre: &[T], grad: &mut [T], slope: T) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= T::zero() {
            *g *= slope;
        }
    }
}

/// Unfolds a `[b*49, cin]` map into `[b*49, k*k*cin]` patches ordered
/// `(kernel row, kernel col, channel)`, zero outside the board.
pub(crate) fn im2col<T: Scalar>(x: &[T], batch: usize, cin: usize, k: usize) -> Vec<T> {
    let width = k * k * cin;
    let mut cols = vec![T::zero(); batch * PIXELS * width];
    for b in 0..batch {
        for r in 0..SIDE {
            for c in 0..SIDE {
                let row = &mut cols[((b * PIXELS) + r * SIDE + c) * width..][..width];
                for kr in 0..k {
                    let ir = (r + kr).wrapping_sub(PAD_BEFORE);
                    if ir >= SIDE {
                        continue;
                    }
                    for kc in 0..k {
                        let ic = (c + kc).wrapping_sub(PAD_BEFORE);
                        if ic >= SIDE {
                            continue;
                        }
                        let src = &x[(b * PIXELS + ir * SIDE + ic) * cin..][..cin];
                        row[(kr * k + kc) * cin..][..cin].copy_from_slice(src);
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the map.
pub(crate) fn col2im<T: Scalar>(cols: &[T], batch: usize, cin: usize, k: usize) -> Vec<T> {
    let width = k * k * cin;
    let mut x = vec![T::zero(); batch * PIXELS * cin];
    for b in 0..batch {
        for r in 0..SIDE {
            for c in 0..SIDE {
                let row = &cols[((b * PIXELS) + r * SIDE + c) * width..][..width];
                for kr in 0..k {
                    let ir = (r + kr).wrapping_sub(PAD_BEFORE);
                    if ir >= SIDE {
                        continue;
                    }
                    for kc in 0..k {
                        let ic = (c + kc).wrapping_sub(PAD_BEFORE);
                        if ic >= SIDE {
                            continue;
                        }
                        let dst = &mut x[(b * PIXELS + ir * SIDE + ic) * cin..][..cin];
                        for (d, &s) in dst.iter_mut().zip(&row[(kr * k + kc) * cin..][..cin]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }
    x
}

/// Per-channel statistics of a `[rows, ch]` matrix (biased variance).
pub(crate) fn channel_moments<T: Scalar>(x: &[T], ch: usize) -> (Vec<T>, Vec<T>) {
    let rows = x.len() / ch;
    let n = T::of(rows as f64);
    let mut mean = vec![T::zero(); ch];
    for row in x.chunks_exact(ch) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![T::zero(); ch];
    for row in x.chunks_exact(ch) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

/// Normalizes `x` in place to `xhat` with the given statistics and returns
/// `1/sqrt(var+eps)` per channel.
pub(crate) fn normalize<T: Scalar>(x: &mut [T], mean: &[T], var: &[T], eps: T) -> Vec<T> {
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let ch = mean.len();
    for row in x.chunks_exact_mut(ch) {
        for ((v, &m), &s) in row.iter_mut().zip(mean).zip(&inv_std) {
            *v = (*v - m) * s;
        }
    }
    inv_std
}

/// `y = gamma * xhat + beta`.
pub(crate) fn scale_shift<T: Scalar>(xhat: &[T], gamma: &[T], beta: &[T]) -> Vec<T> {
    let ch = gamma.len();
    let mut y = xhat.to_vec();
    for row in y.chunks_exact_mut(ch) {
        for ((v, &g), &b) in row.iter_mut().zip(gamma).zip(beta) {
            *v = *v * g + b;
        }
    }
    y
}

/// Batch-statistics normalization backward. Returns `dx` and accumulates
/// `dgamma`, `dbeta`.
pub(crate) fn batch_norm_backward<T: Scalar>(
    dy: &[T],
    xhat: &[T],
    inv_std: &[T],
    gamma: &[T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) -> Vec<T> {
    let ch = gamma.len();
    let rows = dy.len() / ch;
    let n = T::of(rows as f64);
    let mut sum_dxhat = vec![T::zero(); ch];
    let mut sum_dxhat_xhat = vec![T::zero(); ch];
    for (drow, xrow) in dy.chunks_exact(ch).zip(xhat.chunks_exact(ch)) {
        for j in 0..ch {
            dgamma[j] += drow[j] * xrow[j];
            dbeta[j] += drow[j];
            let dxh = drow[j] * gamma[j];
            sum_dxhat[j] += dxh;
            sum_dxhat_xhat[j] += dxh * xrow[j];
        }
    }
    let mut dx = vec![T::zero(); dy.len()];
    for ((dxrow, drow), xrow) in dx
        .chunks_exact_mut(ch)
        .zip(dy.chunks_exact(ch))
        .zip(xhat.chunks_exact(ch))
    {
        for j in 0..ch {
            let dxh = drow[j] * gamma[j];
            dxrow[j] = inv_std[j] / n * (n * dxh - sum_dxhat[j] - xrow[j] * sum_dxhat_xhat[j]);
        }
    }
    dx
}

/// Softmax over the entries where `legal` is set; illegal entries are 0.
/// An all-illegal mask yields all zeros.
pub fn masked_softmax<T: Scalar>(logits: &[T], legal: u64) -> Vec<T> {
    let is_legal = |i: usize| legal >> i & 1 == 1;
    let max = logits
        .iter()
        .enumerate()
        .filter(|&(i, _)| is_legal(i))
        .map(|(_, &v)| v)
        .fold(T::neg_infinity(), T::max);
    if max == T::neg_infinity() {
        return vec![T::zero(); logits.len()];
    }
    let mut out: Vec<T> = logits
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if is_legal(i) {
                (v - max).exp()
            } else {
                T::zero()
            }
        })
        .collect();
    let total: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}
