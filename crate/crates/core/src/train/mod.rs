//! Contrastive pretraining, MOS fine-tuning, checkpoints and learning curves.

mod checkpoint;
mod curve;
mod data;
mod finetune;
mod pretrain;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Stage, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use curve::{select_checkpoint_epoch, smooth, CurveLog, CurveRecord};
pub use data::{load_mos_dataset, read_label_table, split_dataset, LabeledClip, MosSample, Split, MOS_RANGE};
pub use finetune::{finetune, predict_clip, FinetuneConfig};
pub use pretrain::{assemble_batch, pretrain, PretrainConfig};

use thiserror::Error;

use crate::audio::AudioError;
use crate::model::ModelError;
use crate::pairgen::PairGenError;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint is incompatible: {0}")]
    Incompatible(String),
    #[error("checkpoint format: {0}")]
    Format(String),
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint checksum mismatch")]
    Checksum,
    #[error("label {mos} for {path:?} lies outside [1, 5]")]
    LabelRange { path: String, mos: f64 },
    #[error("dataset problem: {0}")]
    Data(String),
    #[error("training diverged: non-finite loss at step {0}")]
    Diverged(u64),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    PairGen(#[from] PairGenError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
