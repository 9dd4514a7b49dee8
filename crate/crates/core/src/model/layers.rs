//! Differentiable building blocks with explicit forward caches and
//! hand-written backward passes.
//!
//! Parallel loops only ever split work across independent output lanes, so
//! every reduction runs in a fixed order and results do not depend on the
//! number of worker threads.

use rand::Rng;
use rayon::prelude::*;

use super::tensor::{Matrix, Signal};
use crate::Scalar;

fn fan_in_uniform<T: Scalar, R: Rng + ?Sized>(n: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| T::of(rng.gen_range(-bound..bound))).collect()
}

#[inline]
pub fn leaky_relu<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        x
    } else {
        x * slope
    }
}

#[inline]
pub fn leaky_relu_grad<T: Scalar>(x: T, slope: T) -> T {
    if x > T::zero() {
        T::one()
    } else {
        slope
    }
}

/// Fully connected layer, `weight` stored `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: fan_in_uniform(in_dim * out_dim, in_dim, rng),
            bias: vec![T::zero(); out_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            weight: vec![T::zero(); self.weight.len()],
            bias: vec![T::zero(); self.bias.len()],
        }
    }

    pub fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        assert_eq!(x.cols, self.in_dim, "linear input width");
        let mut y = Matrix::zeros(x.rows, self.out_dim);
        for r in 0..x.rows {
            let xr = x.row(r);
            for (o, out) in y.row_mut(r).iter_mut().enumerate() {
                let w = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
                *out = self.bias[o] + w.iter().zip(xr).map(|(&a, &b)| a * b).sum::<T>();
            }
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &Matrix<T>, dy: &Matrix<T>, grad: &mut Linear<T>) -> Matrix<T> {
        let mut dx = Matrix::zeros(x.rows, self.in_dim);
        for r in 0..x.rows {
            let xr = x.row(r);
            let dyr = dy.row(r);
            for ((&g, gb), gw) in dyr.iter().zip(grad.bias.iter_mut()).zip(grad.weight.chunks_mut(self.in_dim)) {
                *gb += g;
                for (gw, &xv) in gw.iter_mut().zip(xr) {
                    *gw += g * xv;
                }
            }
            let dxr = dx.row_mut(r);
            for (&g, w) in dyr.iter().zip(self.weight.chunks(self.in_dim)) {
                for (d, &wv) in dxr.iter_mut().zip(w) {
                    *d += g * wv;
                }
            }
        }
        dx
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// 1-D convolution with "same"-style zero padding of `kernel/2` on each side.
/// `weight` is stored `[out][in][kernel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

/// Output index range `t` for which `t*stride + offset` lies in `[0, len_in)`.
fn valid_range(offset: isize, stride: usize, len_in: usize, len_out: usize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 { 0 } else { ((-offset) + s - 1) / s };
    let hi = if (len_in as isize) - offset <= 0 {
        0
    } else {
        ((len_in as isize - offset - 1) / s + 1).min(len_out as isize)
    };
    (lo as usize, (hi.max(lo)) as usize)
}

impl<T: Scalar> Conv1d<T> {
    pub fn init<R: Rng + ?Sized>(in_channels: usize, out_channels: usize, kernel: usize, stride: usize, rng: &mut R) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight: fan_in_uniform(in_channels * out_channels * kernel, in_channels * kernel, rng),
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            weight: vec![T::zero(); self.weight.len()],
            bias: vec![T::zero(); self.bias.len()],
            ..*self
        }
    }

    fn padding(&self) -> usize {
        self.kernel / 2
    }

    pub fn output_len(&self, len_in: usize) -> usize {
        (len_in + 2 * self.padding() - self.kernel) / self.stride + 1
    }

    pub fn forward(&self, x: &Signal<T>) -> Signal<T> {
        assert_eq!(x.channels, self.in_channels, "conv input channels");
        let len_out = self.output_len(x.len);
        let mut y = Signal::zeros(x.batch, self.out_channels, len_out);
        let pad = self.padding() as isize;
        let (cin, k, s) = (self.in_channels, self.kernel, self.stride);
        y.data.par_chunks_mut(len_out).enumerate().for_each(|(lane, out)| {
            let (b, o) = (lane / self.out_channels, lane % self.out_channels);
            out.iter_mut().for_each(|v| *v = self.bias[o]);
            for c in 0..cin {
                let xin = x.lane(b, c);
                let w = &self.weight[(o * cin + c) * k..(o * cin + c + 1) * k];
                for (kk, &wv) in w.iter().enumerate() {
                    let off = kk as isize - pad;
                    let (t0, t1) = valid_range(off, s, x.len, len_out);
                    for t in t0..t1 {
                        out[t] += wv * xin[(t as isize * s as isize + off) as usize];
                    }
                }
            }
        });
        y
    }

    /// Accumulates weight/bias gradients into `grad`; returns `dL/dx` when requested.
    pub fn backward(&self, x: &Signal<T>, dy: &Signal<T>, grad: &mut Conv1d<T>, need_dx: bool) -> Option<Signal<T>> {
        let (cin, k, s) = (self.in_channels, self.kernel, self.stride);
        let pad = self.padding() as isize;
        let len_out = dy.len;
        grad.weight
            .par_chunks_mut(cin * k)
            .zip(grad.bias.par_iter_mut())
            .enumerate()
            .for_each(|(o, (gw, gb))| {
                for b in 0..x.batch {
                    let g = dy.lane(b, o);
                    *gb += g.iter().copied().sum::<T>();
                    for c in 0..cin {
                        let xin = x.lane(b, c);
                        for kk in 0..k {
                            let off = kk as isize - pad;
                            let (t0, t1) = valid_range(off, s, x.len, len_out);
                            let mut acc = T::zero();
                            for t in t0..t1 {
                                acc += g[t] * xin[(t as isize * s as isize + off) as usize];
                            }
                            gw[c * k + kk] += acc;
                        }
                    }
                }
            });
        if !need_dx {
            return None;
        }
        let mut dx = Signal::zeros(x.batch, cin, x.len);
        let len_in = x.len;
        dx.data.par_chunks_mut(len_in).enumerate().for_each(|(lane, dxl)| {
            let (b, c) = (lane / cin, lane % cin);
            for o in 0..self.out_channels {
                let g = dy.lane(b, o);
                let w = &self.weight[(o * cin + c) * k..(o * cin + c + 1) * k];
                for (kk, &wv) in w.iter().enumerate() {
                    let off = kk as isize - pad;
                    let (t0, t1) = valid_range(off, s, len_in, len_out);
                    for t in t0..t1 {
                        dxl[(t as isize * s as isize + off) as usize] += wv * g[t];
                    }
                }
            }
        });
        Some(dx)
    }

    pub fn parameter_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Per-channel batch normalization over `(batch, time)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm1d<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

/// Intermediate values of a training-mode batch-norm forward pass.
#[derive(Debug, Clone)]
pub struct BatchNormCache<T> {
    pub xhat: Signal<T>,
    pub inv_std: Vec<T>,
    pub batch_mean: Vec<T>,
    /// Unbiased variance, used for the running estimate.
    pub batch_var_unbiased: Vec<T>,
}

impl<T: Scalar> BatchNorm1d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn zeros_like(&self) -> Self {
        let n = self.gamma.len();
        Self {
            gamma: vec![T::zero(); n],
            beta: vec![T::zero(); n],
            running_mean: vec![T::zero(); n],
            running_var: vec![T::zero(); n],
        }
    }

    pub fn forward_eval(&self, x: &Signal<T>, eps: T) -> Signal<T> {
        let mut y = x.clone();
        y.data.par_chunks_mut(x.len).enumerate().for_each(|(lane, v)| {
            let c = lane % x.channels;
            let scale = self.gamma[c] / (self.running_var[c] + eps).sqrt();
            let shift = self.beta[c] - self.running_mean[c] * scale;
            v.iter_mut().for_each(|s| *s = *s * scale + shift);
        });
        y
    }

    pub fn forward_train(&self, x: &Signal<T>, eps: T) -> (Signal<T>, BatchNormCache<T>) {
        let count = x.batch * x.len;
        let n = T::of_usize(count);
        let stats: Vec<(T, T)> = (0..x.channels)
            .into_par_iter()
            .map(|c| {
                let mean = (0..x.batch).map(|b| x.lane(b, c).iter().copied().sum::<T>()).sum::<T>() / n;
                let ss = (0..x.batch)
                    .map(|b| x.lane(b, c).iter().map(|&v| (v - mean) * (v - mean)).sum::<T>())
                    .sum::<T>();
                (mean, ss)
            })
            .collect();
        let batch_mean: Vec<T> = stats.iter().map(|s| s.0).collect();
        let inv_std: Vec<T> = stats.iter().map(|s| T::one() / (s.1 / n + eps).sqrt()).collect();
        let batch_var_unbiased = stats
            .iter()
            .map(|s| if count > 1 { s.1 / T::of_usize(count - 1) } else { T::zero() })
            .collect();
        let mut xhat = x.clone();
        xhat.data.par_chunks_mut(x.len).enumerate().for_each(|(lane, v)| {
            let c = lane % x.channels;
            v.iter_mut().for_each(|s| *s = (*s - batch_mean[c]) * inv_std[c]);
        });
        let y = self.affine(&xhat);
        (y, BatchNormCache { xhat, inv_std, batch_mean, batch_var_unbiased })
    }

    pub fn affine(&self, xhat: &Signal<T>) -> Signal<T> {
        let mut y = xhat.clone();
        y.data.par_chunks_mut(xhat.len).enumerate().for_each(|(lane, v)| {
            let c = lane % xhat.channels;
            v.iter_mut().for_each(|s| *s = *s * self.gamma[c] + self.beta[c]);
        });
        y
    }

    pub fn backward_train(&self, cache: &BatchNormCache<T>, dy: &Signal<T>, grad: &mut BatchNorm1d<T>) -> Signal<T> {
        let xhat = &cache.xhat;
        let n = T::of_usize(xhat.batch * xhat.len);
        let sums: Vec<(T, T)> = (0..xhat.channels)
            .into_par_iter()
            .map(|c| {
                let mut sdy = T::zero();
                let mut sdyx = T::zero();
                for b in 0..xhat.batch {
                    for (&g, &xh) in dy.lane(b, c).iter().zip(xhat.lane(b, c)) {
                        sdy += g;
                        sdyx += g * xh;
                    }
                }
                (sdy, sdyx)
            })
            .collect();
        for (c, &(sdy, sdyx)) in sums.iter().enumerate() {
            grad.beta[c] += sdy;
            grad.gamma[c] += sdyx;
        }
        let mut dx = Signal::zeros(xhat.batch, xhat.channels, xhat.len);
        dx.data.par_chunks_mut(xhat.len).enumerate().for_each(|(lane, d)| {
            let (b, c) = (lane / xhat.channels, lane % xhat.channels);
            let (sdy, sdyx) = sums[c];
            let k = self.gamma[c] * cache.inv_std[c] / n;
            for ((dv, &g), &xh) in d.iter_mut().zip(dy.lane(b, c)).zip(xhat.lane(b, c)) {
                *dv = k * (n * g - sdy - xh * sdyx);
            }
        });
        dx
    }

    pub fn update_running(&mut self, cache: &BatchNormCache<T>, momentum: T) {
        let keep = T::one() - momentum;
        for c in 0..self.gamma.len() {
            self.running_mean[c] = keep * self.running_mean[c] + momentum * cache.batch_mean[c];
            self.running_var[c] = keep * self.running_var[c] + momentum * cache.batch_var_unbiased[c];
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.gamma.len() + self.beta.len()
    }
}

/// Inverted dropout mask: kept units are scaled by `1/(1-rate)`.
pub fn dropout_mask<T: Scalar, R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Vec<T> {
    if rate <= 0.0 {
        return vec![T::one(); n];
    }
    let keep = T::of(1.0 / (1.0 - rate));
    (0..n).map(|_| if rng.gen::<f64>() < rate { T::zero() } else { keep }).collect()
}
