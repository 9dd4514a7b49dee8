use rand::Rng;

use super::config::ModelConfig;
use super::encoder::Encoder;
use super::heads::{init_projection, init_regressor, scaled_sigmoid, Mlp};
use super::layers::Linear;
use super::tensor::Matrix;
use super::{Mode, ModelError};
use crate::seed::{rng_for, stream};
use crate::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Encoder,
    Projection,
    Regressor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Learnable(ParamGroup),
    /// Batch-norm running statistics: saved, never optimized.
    Buffer,
}

/// All learnable parameters and buffers of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub encoder: Encoder<T>,
    pub projection: Option<Mlp<T>>,
    pub regressor: Option<Mlp<T>>,
}

/// Seeded initialization; every tensor draws from its own sub-stream.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>, ModelError> {
    config.validate()?;
    let encoder = Encoder::init(&config.encoder, |i| rng_for(seed, &[stream::INIT, 0, i as u64]));
    let projection = config
        .projection
        .enabled
        .then(|| init_projection(&config.projection, |i| rng_for(seed, &[stream::INIT, 1, i as u64])));
    let regressor = Some(init_regressor(&config.regressor, |i| rng_for(seed, &[stream::HEAD_INIT, 2, i as u64])));
    Ok(ModelParams { config: config.clone(), encoder, projection, regressor })
}

/// Number of learnable scalars (batch-norm running statistics excluded).
pub fn count_parameters<T: Scalar>(params: &ModelParams<T>) -> usize {
    params.encoder.parameter_count()
        + params.projection.as_ref().map_or(0, Mlp::parameter_count)
        + params.regressor.as_ref().map_or(0, Mlp::parameter_count)
}

/// Leading half of an embedding, the part used by the contrastive loss.
pub fn half_embedding<T: Scalar>(e: &[T], embedding_dim: usize) -> Result<Vec<T>, ModelError> {
    if e.len() != embedding_dim || !embedding_dim.is_multiple_of(2) {
        return Err(ModelError::Shape(format!("expected a {embedding_dim}-d embedding, got {}", e.len())));
    }
    Ok(e[..embedding_dim / 2].to_vec())
}

/// Projection head on a batch of half embeddings. Dropout runs only in train
/// mode with an `rng`.
pub fn projection_forward<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    h: &Matrix<T>,
    mode: Mode,
    rng: Option<&mut R>,
) -> Result<Matrix<T>, ModelError> {
    let head = params.projection.as_ref().ok_or(ModelError::HeadDisabled("projection"))?;
    if h.cols != head.input_dim() {
        return Err(ModelError::Shape(format!("projection expects {} inputs, got {}", head.input_dim(), h.cols)));
    }
    Ok(head.forward(h, mode, rng).0)
}

/// MOS prediction in (1, 5) for one full embedding.
pub fn regressor_forward<T: Scalar>(params: &ModelParams<T>, e: &[T]) -> Result<T, ModelError> {
    let head = params.regressor.as_ref().ok_or(ModelError::HeadDisabled("regressor"))?;
    if e.len() != head.input_dim() {
        return Err(ModelError::Shape(format!("regressor expects {} inputs, got {}", head.input_dim(), e.len())));
    }
    let x = Matrix { rows: 1, cols: e.len(), data: e.to_vec() };
    let (out, _) = head.forward::<rand_chacha::ChaCha8Rng>(&x, Mode::Eval, None);
    Ok(scaled_sigmoid(out.data[0]))
}

fn linear_tensors<'a, T>(prefix: &str, l: &'a Linear<T>, group: ParamGroup, out: &mut Vec<(String, TensorKind, &'a [T])>) {
    out.push((format!("{prefix}.weight"), TensorKind::Learnable(group), &l.weight));
    out.push((format!("{prefix}.bias"), TensorKind::Learnable(group), &l.bias));
}

fn linear_tensors_mut<'a, T>(prefix: &str, l: &'a mut Linear<T>, group: ParamGroup, out: &mut Vec<(String, TensorKind, &'a mut Vec<T>)>) {
    out.push((format!("{prefix}.weight"), TensorKind::Learnable(group), &mut l.weight));
    out.push((format!("{prefix}.bias"), TensorKind::Learnable(group), &mut l.bias));
}

impl<T: Scalar> ModelParams<T> {
    /// A model with no layers at all.
    pub fn empty(config: ModelConfig) -> Self {
        Self {
            encoder: Encoder { config: config.encoder.clone(), layers: Vec::new() },
            config,
            projection: None,
            regressor: None,
        }
    }

    /// Same structure, every value zero; used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self {
            config: self.config.clone(),
            encoder: self.encoder.zeros_like(),
            projection: self.projection.as_ref().map(Mlp::zeros_like),
            regressor: self.regressor.as_ref().map(Mlp::zeros_like),
        }
    }

    /// Every tensor in a fixed order with its checkpoint name.
    pub fn tensors(&self) -> Vec<(String, TensorKind, &[T])> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.layers.iter().enumerate() {
            let g = TensorKind::Learnable(ParamGroup::Encoder);
            out.push((format!("encoder.{i}.conv.weight"), g, &l.conv.weight[..]));
            out.push((format!("encoder.{i}.conv.bias"), g, &l.conv.bias[..]));
            out.push((format!("encoder.{i}.bn.gamma"), g, &l.norm.gamma[..]));
            out.push((format!("encoder.{i}.bn.beta"), g, &l.norm.beta[..]));
            out.push((format!("encoder.{i}.bn.running_mean"), TensorKind::Buffer, &l.norm.running_mean[..]));
            out.push((format!("encoder.{i}.bn.running_var"), TensorKind::Buffer, &l.norm.running_var[..]));
        }
        if let Some(p) = &self.projection {
            for (i, l) in p.layers.iter().enumerate() {
                linear_tensors(&format!("projection.{i}"), l, ParamGroup::Projection, &mut out);
            }
        }
        if let Some(r) = &self.regressor {
            for (i, l) in r.layers.iter().enumerate() {
                linear_tensors(&format!("regressor.{i}"), l, ParamGroup::Regressor, &mut out);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, TensorKind, &mut Vec<T>)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.layers.iter_mut().enumerate() {
            let g = TensorKind::Learnable(ParamGroup::Encoder);
            out.push((format!("encoder.{i}.conv.weight"), g, &mut l.conv.weight));
            out.push((format!("encoder.{i}.conv.bias"), g, &mut l.conv.bias));
            out.push((format!("encoder.{i}.bn.gamma"), g, &mut l.norm.gamma));
            out.push((format!("encoder.{i}.bn.beta"), g, &mut l.norm.beta));
            out.push((format!("encoder.{i}.bn.running_mean"), TensorKind::Buffer, &mut l.norm.running_mean));
            out.push((format!("encoder.{i}.bn.running_var"), TensorKind::Buffer, &mut l.norm.running_var));
        }
        if let Some(p) = &mut self.projection {
            for (i, l) in p.layers.iter_mut().enumerate() {
                linear_tensors_mut(&format!("projection.{i}"), l, ParamGroup::Projection, &mut out);
            }
        }
        if let Some(r) = &mut self.regressor {
            for (i, l) in r.layers.iter_mut().enumerate() {
                linear_tensors_mut(&format!("regressor.{i}"), l, ParamGroup::Regressor, &mut out);
            }
        }
        out
    }

    /// Eval-mode embedding of one waveform.
    pub fn embed(&self, wave: &[T]) -> Result<Vec<T>, ModelError> {
        self.encoder.embed(wave)
    }

    /// Eval-mode MOS prediction for one waveform.
    pub fn predict_mos(&self, wave: &[T]) -> Result<T, ModelError> {
        regressor_forward(self, &self.embed(wave)?)
    }
}
