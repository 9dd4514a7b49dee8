use rand::Rng;
use rayon::prelude::*;

use super::config::EncoderConfig;
use super::layers::{leaky_relu, leaky_relu_grad, BatchNorm1d, BatchNormCache, Conv1d};
use super::tensor::{Matrix, Signal};
use super::{Mode, ModelError};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer<T> {
    pub conv: Conv1d<T>,
    pub norm: BatchNorm1d<T>,
}

/// Raw-waveform encoder: strided convolutions with batch norm and leaky ReLU,
/// followed by global average pooling over time.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder<T> {
    pub config: EncoderConfig,
    pub layers: Vec<EncoderLayer<T>>,
}

struct LayerCache<T> {
    input: Signal<T>,
    norm: BatchNormCache<T>,
}

/// Activations kept from a training-mode forward pass.
pub struct EncoderCache<T> {
    layers: Vec<LayerCache<T>>,
    final_len: usize,
}

impl<T: Scalar> Encoder<T> {
    /// Builds the layers; `rng_for_layer(i)` supplies the generator for layer `i`.
    pub fn init<R: Rng>(config: &EncoderConfig, mut rng_for_layer: impl FnMut(usize) -> R) -> Self {
        let mut in_ch = 1;
        let layers = (0..config.num_layers)
            .map(|i| {
                let out_ch = config.channel_schedule[i];
                let mut rng = rng_for_layer(i);
                let conv = Conv1d::init(in_ch, out_ch, config.kernel_size, config.stride_schedule[i], &mut rng);
                in_ch = out_ch;
                EncoderLayer { conv, norm: BatchNorm1d::new(out_ch) }
            })
            .collect();
        Self { config: config.clone(), layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| EncoderLayer { conv: l.conv.zeros_like(), norm: l.norm.zeros_like() })
                .collect(),
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.conv.out_channels)
    }

    pub fn check_input_len(&self, len: usize) -> Result<(), ModelError> {
        let needed = self.config.receptive_field();
        if len < needed {
            return Err(ModelError::InputTooShort { len, needed });
        }
        Ok(())
    }

    fn pool(x: &Signal<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.batch, x.channels);
        let n = T::of_usize(x.len);
        for b in 0..x.batch {
            for c in 0..x.channels {
                out.data[b * x.channels + c] = x.lane(b, c).iter().copied().sum::<T>() / n;
            }
        }
        out
    }

    fn activate(&self, x: &mut Signal<T>) {
        let slope = T::of(self.config.leaky_slope);
        x.data.par_iter_mut().for_each(|v| *v = leaky_relu(*v, slope));
    }

    /// Embeds a batch of equal-length waveforms (`channels == 1`).
    ///
    /// In eval mode batch norm uses its running statistics, so each row of the
    /// output depends only on the matching input waveform. Train mode returns
    /// the cache needed by [`backward`](Self::backward).
    pub fn forward(&self, input: &Signal<T>, mode: Mode) -> Result<(Matrix<T>, Option<EncoderCache<T>>), ModelError> {
        if input.channels != 1 {
            return Err(ModelError::Shape(format!("encoder expects mono input, got {} channels", input.channels)));
        }
        if input.batch == 0 {
            return Err(ModelError::Shape("empty batch".into()));
        }
        self.check_input_len(input.len)?;
        let eps = T::of(self.config.bn_eps);
        let mut x = input.clone();
        let mut caches = Vec::new();
        for layer in &self.layers {
            let z = layer.conv.forward(&x);
            let mut y = match mode {
                Mode::Eval => layer.norm.forward_eval(&z, eps),
                Mode::Train => {
                    let (y, norm) = layer.norm.forward_train(&z, eps);
                    caches.push(LayerCache { input: std::mem::replace(&mut x, Signal::zeros(0, 0, 0)), norm });
                    y
                }
            };
            self.activate(&mut y);
            x = y;
        }
        let emb = Self::pool(&x);
        let cache = (mode == Mode::Train).then_some(EncoderCache { layers: caches, final_len: x.len });
        Ok((emb, cache))
    }

    /// Eval-mode embedding of a single waveform of any valid length.
    pub fn embed(&self, wave: &[T]) -> Result<Vec<T>, ModelError> {
        let (m, _) = self.forward(&Signal::from_waveforms(&[wave]), Mode::Eval)?;
        Ok(m.data)
    }

    /// Back-propagates `d_emb` (batch × embedding) and accumulates into `grad`.
    pub fn backward(&self, cache: &EncoderCache<T>, d_emb: &Matrix<T>, grad: &mut Encoder<T>) {
        let slope = T::of(self.config.leaky_slope);
        let channels = d_emb.cols;
        let len = cache.final_len;
        let inv_len = T::one() / T::of_usize(len);
        let mut d = Signal::zeros(d_emb.rows, channels, len);
        d.data.par_chunks_mut(len).enumerate().for_each(|(lane, v)| {
            let g = d_emb.data[lane] * inv_len;
            v.iter_mut().for_each(|x| *x = g);
        });
        for (i, (layer, lc)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            // leaky ReLU acts on gamma * xhat + beta
            let xhat = &lc.norm.xhat;
            d.data.par_chunks_mut(xhat.len).enumerate().for_each(|(lane, v)| {
                let c = lane % xhat.channels;
                let (g, bta) = (layer.norm.gamma[c], layer.norm.beta[c]);
                let xl = &xhat.data[lane * xhat.len..(lane + 1) * xhat.len];
                for (dv, &xh) in v.iter_mut().zip(xl) {
                    *dv *= leaky_relu_grad(xh * g + bta, slope);
                }
            });
            let gl = &mut grad.layers[i];
            let dz = layer.norm.backward_train(&lc.norm, &d, &mut gl.norm);
            match layer.conv.backward(&lc.input, &dz, &mut gl.conv, i > 0) {
                Some(dx) => d = dx,
                None => break,
            }
        }
    }

    /// Folds the batch statistics of a training step into the running estimates.
    pub fn update_running_stats(&mut self, cache: &EncoderCache<T>) {
        let momentum = T::of(self.config.bn_momentum);
        for (layer, lc) in self.layers.iter_mut().zip(&cache.layers) {
            layer.norm.update_running(&lc.norm, momentum);
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.conv.parameter_count() + l.norm.parameter_count()).sum()
    }
}
