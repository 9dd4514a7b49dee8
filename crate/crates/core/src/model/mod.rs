//! Encoder, projection and regression heads, and the training objectives.

pub mod config;
mod encoder;
mod heads;
pub mod layers;
mod loss;
mod objective;
mod params;
mod tensor;

use thiserror::Error;

pub use config::{EncoderConfig, LossConfig, ModelConfig, ProjectionConfig, RegressorConfig};
pub use encoder::{Encoder, EncoderCache, EncoderLayer};
pub use heads::{init_projection, init_regressor, scaled_sigmoid, scaled_sigmoid_grad, sigmoid, Mlp, MlpCache};
pub use loss::{cosine_similarity, mse_loss, mse_loss_grad, nt_xent_loss, nt_xent_loss_grad, COSINE_EPS};
pub use objective::{contrastive_objective, regression_objective, regressor_mse, ContrastiveStep, RegressorMse, RegressionStep};
pub use params::{
    count_parameters, half_embedding, init_params, projection_forward, regressor_forward, ModelParams, ParamGroup,
    TensorKind,
};
pub use tensor::{Matrix, Signal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("input of {len} samples is shorter than the receptive field ({needed})")]
    InputTooShort { len: usize, needed: usize },
    #[error("non-finite values in input")]
    NonFinite,
    #[error("the {0} head is not part of this model")]
    HeadDisabled(&'static str),
}
