use rand::Rng;

use super::config::{ProjectionConfig, RegressorConfig};
use super::layers::{dropout_mask, leaky_relu, leaky_relu_grad, Linear};
use super::tensor::Matrix;
use super::Mode;
use crate::Scalar;

/// Stack of linear layers with leaky ReLU (and optional dropout) after every
/// layer but the last.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    pub layers: Vec<Linear<T>>,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
}

pub struct MlpCache<T> {
    inputs: Vec<Matrix<T>>,
    pre_acts: Vec<Matrix<T>>,
    masks: Vec<Vec<T>>,
}

impl<T: Scalar> Mlp<T> {
    pub fn init<R: Rng>(dims: &[usize], leaky_slope: f64, dropout_rate: f64, mut rng_for_layer: impl FnMut(usize) -> R) -> Self {
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::init(w[0], w[1], &mut rng_for_layer(i)))
            .collect();
        Self { layers, leaky_slope, dropout_rate }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Linear::zeros_like).collect(),
            ..*self
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    /// Forward pass. Dropout is applied only in train mode and only when an
    /// `rng` is supplied.
    pub fn forward<R: Rng + ?Sized>(&self, x: &Matrix<T>, mode: Mode, mut rng: Option<&mut R>) -> (Matrix<T>, MlpCache<T>) {
        let slope = T::of(self.leaky_slope);
        let last = self.layers.len().saturating_sub(1);
        let mut cache = MlpCache { inputs: Vec::new(), pre_acts: Vec::new(), masks: Vec::new() };
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            cache.inputs.push(std::mem::replace(&mut h, Matrix::zeros(0, 0)));
            if i == last {
                h = z.clone();
                cache.pre_acts.push(z);
                break;
            }
            let mut a = z.clone();
            a.data.iter_mut().for_each(|v| *v = leaky_relu(*v, slope));
            let mask = match (mode, rng.as_deref_mut()) {
                (Mode::Train, Some(r)) if self.dropout_rate > 0.0 => dropout_mask(a.data.len(), self.dropout_rate, r),
                _ => vec![T::one(); a.data.len()],
            };
            a.data.iter_mut().zip(&mask).for_each(|(v, &m)| *v *= m);
            cache.pre_acts.push(z);
            cache.masks.push(mask);
            h = a;
        }
        (h, cache)
    }

    pub fn backward(&self, cache: &MlpCache<T>, d_out: &Matrix<T>, grad: &mut Mlp<T>) -> Matrix<T> {
        let slope = T::of(self.leaky_slope);
        let last = self.layers.len() - 1;
        let mut d = d_out.clone();
        for i in (0..self.layers.len()).rev() {
            if i != last {
                let z = &cache.pre_acts[i];
                let mask = &cache.masks[i];
                for ((dv, &zv), &m) in d.data.iter_mut().zip(&z.data).zip(mask) {
                    *dv = *dv * m * leaky_relu_grad(zv, slope);
                }
            }
            d = self.layers[i].backward(&cache.inputs[i], &d, &mut grad.layers[i]);
        }
        d
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(Linear::parameter_count).sum()
    }
}

pub fn init_projection<T: Scalar, R: Rng>(cfg: &ProjectionConfig, rng_for_layer: impl FnMut(usize) -> R) -> Mlp<T> {
    Mlp::init(
        &[cfg.input_dim, cfg.layer_dims.0, cfg.layer_dims.1],
        cfg.leaky_slope,
        cfg.dropout_rate,
        rng_for_layer,
    )
}

pub fn init_regressor<T: Scalar, R: Rng>(cfg: &RegressorConfig, rng_for_layer: impl FnMut(usize) -> R) -> Mlp<T> {
    let [h1, h2, h3] = cfg.hidden_dims;
    Mlp::init(&[cfg.input_dim, h1, h2, h3, 1], cfg.leaky_slope, 0.0, rng_for_layer)
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Maps a real pre-activation to a MOS in (1, 5): `1 + 4·σ(x)`.
#[inline]
pub fn scaled_sigmoid<T: Scalar>(x: T) -> T {
    T::one() + T::of(4.0) * sigmoid(x)
}

#[inline]
pub fn scaled_sigmoid_grad<T: Scalar>(x: T) -> T {
    let s = sigmoid(x);
    T::of(4.0) * s * (T::one() - s)
}
