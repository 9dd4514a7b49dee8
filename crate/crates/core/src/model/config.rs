use serde::{Deserialize, Serialize};

use super::ModelError;

pub const ENCODER_LAYERS: usize = 16;
pub const ENCODER_KERNEL: usize = 15;
/// Layers per block of constant filter count.
pub const BLOCK_LAYERS: usize = 4;

fn block_schedule(widths: [usize; 4]) -> Vec<usize> {
    widths.iter().flat_map(|&w| std::iter::repeat_n(w, BLOCK_LAYERS)).collect()
}

fn even_layer_strides() -> Vec<usize> {
    (0..ENCODER_LAYERS).map(|i| if i % 2 == 0 { 2 } else { 1 }).collect()
}

/// Conv → batch norm → leaky ReLU, sixteen times, then global average pooling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub kernel_size: usize,
    pub channel_schedule: Vec<usize>,
    pub stride_schedule: Vec<usize>,
    pub leaky_slope: f64,
    pub embedding_dim: usize,
    /// Leading coordinates of the embedding fed to the contrastive loss.
    pub half_dim: usize,
    pub bn_momentum: f64,
    pub bn_eps: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::with_widths([64, 128, 256, 512])
    }
}

impl EncoderConfig {
    pub fn with_widths(widths: [usize; 4]) -> Self {
        Self {
            num_layers: ENCODER_LAYERS,
            kernel_size: ENCODER_KERNEL,
            channel_schedule: block_schedule(widths),
            stride_schedule: even_layer_strides(),
            leaky_slope: 0.2,
            embedding_dim: widths[3],
            half_dim: widths[3] / 2,
            bn_momentum: 0.1,
            bn_eps: 1e-5,
        }
    }

    /// Sixteen filters in the first block, doubling every four layers.
    pub fn base16() -> Self {
        Self::with_widths([16, 32, 64, 128])
    }

    /// Narrow encoder for CPU smoke runs; same depth, kernel and strides.
    pub fn toy() -> Self {
        Self::with_widths([4, 8, 16, 32])
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if self.num_layers != ENCODER_LAYERS {
            return bad(format!("encoder needs {ENCODER_LAYERS} layers, got {}", self.num_layers));
        }
        if self.kernel_size != ENCODER_KERNEL {
            return bad(format!("encoder kernel must be {ENCODER_KERNEL}, got {}", self.kernel_size));
        }
        if self.channel_schedule.len() != self.num_layers || self.stride_schedule.len() != self.num_layers {
            return bad("channel and stride schedules need one entry per layer".into());
        }
        if self.channel_schedule.contains(&0) || self.stride_schedule.contains(&0) {
            return bad("channel counts and strides must be positive".into());
        }
        for i in 1..self.num_layers {
            let (prev, cur) = (self.channel_schedule[i - 1], self.channel_schedule[i]);
            if cur != prev && i % BLOCK_LAYERS != 0 {
                return bad(format!("channel count changes inside a block at layer {i}"));
            }
            if cur < prev {
                return bad(format!("channel count decreases at layer {i}"));
            }
        }
        if self.channel_schedule.last() != Some(&self.embedding_dim) {
            return bad("last channel count must equal the embedding dimension".into());
        }
        if !self.embedding_dim.is_multiple_of(2) || self.half_dim * 2 != self.embedding_dim {
            return bad("half dimension must be exactly half the embedding".into());
        }
        if !(self.leaky_slope.is_finite() && self.bn_eps > 0.0 && (0.0..=1.0).contains(&self.bn_momentum)) {
            return bad("invalid slope, batch-norm epsilon or momentum".into());
        }
        Ok(())
    }

    /// Input samples that influence one output position of the last layer.
    pub fn receptive_field(&self) -> usize {
        let mut jump = 1;
        let mut field = 1;
        for &s in &self.stride_schedule {
            field += (self.kernel_size - 1) * jump;
            jump *= s;
        }
        field
    }

    /// Time length of every layer's output for an input of `len` samples.
    pub fn layer_lengths(&self, len: usize) -> Vec<usize> {
        let pad = self.kernel_size / 2;
        let mut cur = len;
        self.stride_schedule
            .iter()
            .map(|&s| {
                cur = (cur + 2 * pad - self.kernel_size) / s + 1;
                cur
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    pub enabled: bool,
    pub input_dim: usize,
    pub layer_dims: (usize, usize),
    pub dropout_rate: f64,
    pub leaky_slope: f64,
}

impl ProjectionConfig {
    pub fn for_input(input_dim: usize, enabled: bool) -> Self {
        Self {
            enabled,
            input_dim,
            layer_dims: (input_dim / 2, input_dim / 4),
            dropout_rate: 0.2,
            leaky_slope: 0.2,
        }
    }

    pub fn validate(&self, half_dim: usize) -> Result<(), ModelError> {
        if self.input_dim != half_dim {
            return Err(ModelError::InvalidConfig("projection input must match the half embedding".into()));
        }
        if self.layer_dims.0 * 2 != self.input_dim || self.layer_dims.1 * 2 != self.layer_dims.0 || self.layer_dims.1 == 0 {
            return Err(ModelError::InvalidConfig("each projection layer must halve its input".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::InvalidConfig("dropout rate must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorConfig {
    pub input_dim: usize,
    pub hidden_dims: [usize; 3],
    pub leaky_slope: f64,
}

impl RegressorConfig {
    pub fn for_input(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: [input_dim / 2, input_dim / 4, input_dim / 8],
            leaky_slope: 0.2,
        }
    }

    pub fn validate(&self, embedding_dim: usize) -> Result<(), ModelError> {
        if self.input_dim != embedding_dim {
            return Err(ModelError::InvalidConfig("regressor input must match the full embedding".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(ModelError::InvalidConfig("regressor hidden widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub temperature: f64,
    pub batch_pairs: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { temperature: 1.0, batch_pairs: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    pub projection: ProjectionConfig,
    pub regressor: RegressorConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::from_encoder(EncoderConfig::default())
    }
}

impl ModelConfig {
    pub fn from_encoder(encoder: EncoderConfig) -> Self {
        Self {
            projection: ProjectionConfig::for_input(encoder.half_dim, true),
            regressor: RegressorConfig::for_input(encoder.embedding_dim),
            encoder,
        }
    }

    pub fn toy() -> Self {
        Self::from_encoder(EncoderConfig::toy())
    }

    pub fn base16() -> Self {
        Self::from_encoder(EncoderConfig::base16())
    }

    pub fn with_projection(mut self, enabled: bool) -> Self {
        self.projection.enabled = enabled;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        self.encoder.validate()?;
        self.projection.validate(self.encoder.half_dim)?;
        self.regressor.validate(self.encoder.embedding_dim)
    }

    /// Width of the vectors fed to the contrastive loss.
    pub fn contrastive_dim(&self) -> usize {
        if self.projection.enabled {
            self.projection.layer_dims.1
        } else {
            self.encoder.half_dim
        }
    }
}
