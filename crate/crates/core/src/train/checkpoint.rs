//! Single-file checkpoint container.
//!
//! Layout: magic, `u32` version, `u64` header length, JSON header, every model
//! tensor as little-endian scalars in `ModelParams::tensors` order, the Adam
//! first and second moments in the same order, and a SHA-256 of everything
//! before it.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FinetuneConfig, PretrainConfig, TrainError};
use crate::model::{init_params, ModelConfig, ModelParams, TensorKind};
use crate::optim::{Adam, AdamConfig};
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"JSQACKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Init,
    Pretrain,
    Finetune,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub stage: Stage,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub stage: Stage,
    pub params: ModelParams<T>,
    pub optimizer: Adam<T>,
    /// Completed epochs of the current stage.
    pub epoch: u64,
    /// Optimizer steps taken in the current stage.
    pub step: u64,
    pub pretrain: Option<PretrainConfig>,
    pub finetune: Option<FinetuneConfig>,
    pub seed_lineage: Vec<SeedRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
    slots: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: String,
    stage: Stage,
    model: ModelConfig,
    pretrain: Option<PretrainConfig>,
    finetune: Option<FinetuneConfig>,
    epoch: u64,
    step: u64,
    seed_lineage: Vec<SeedRecord>,
    tensors: Vec<TensorEntry>,
    optimizer: OptimizerHeader,
}

impl<T: Scalar> Checkpoint<T> {
    /// Freshly initialized model with an empty optimizer.
    pub fn initial(config: &ModelConfig, seed: u64) -> Result<Self, TrainError> {
        let params = init_params(config, seed)?;
        let optimizer = Adam::new(AdamConfig::default(), &params);
        Ok(Self {
            stage: Stage::Init,
            params,
            optimizer,
            epoch: 0,
            step: 0,
            pretrain: None,
            finetune: None,
            seed_lineage: vec![SeedRecord { stage: Stage::Init, seed }],
        })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TrainError> {
        let tensors = self.params.tensors();
        let header = Header {
            dtype: T::DTYPE.to_string(),
            stage: self.stage,
            model: self.params.config.clone(),
            pretrain: self.pretrain.clone(),
            finetune: self.finetune.clone(),
            epoch: self.epoch,
            step: self.step,
            seed_lineage: self.seed_lineage.clone(),
            tensors: tensors.iter().map(|(name, _, v)| TensorEntry { name: name.clone(), len: v.len() }).collect(),
            optimizer: OptimizerHeader {
                config: self.optimizer.config,
                step: self.optimizer.step,
                slots: self.optimizer.first.iter().map(Vec::len).collect(),
            },
        };
        let learnable: Vec<usize> =
            tensors.iter().filter(|t| matches!(t.1, TensorKind::Learnable(_))).map(|t| t.2.len()).collect();
        if header.optimizer.slots != learnable || self.optimizer.second.iter().map(Vec::len).ne(learnable.iter().copied()) {
            return Err(TrainError::Format("optimizer state does not match the model".into()));
        }
        let header_json = serde_json::to_vec(&header)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header_json);
        let all = tensors
            .iter()
            .map(|t| t.2)
            .chain(self.optimizer.first.iter().map(|v| &v[..]))
            .chain(self.optimizer.second.iter().map(|v| &v[..]));
        for slice in all {
            for &v in slice {
                v.write_le(&mut buf);
            }
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    /// Parses a checkpoint; nothing is returned unless the checksum, magic,
    /// version and scalar type all check out.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        const FIXED: usize = 8 + 4 + 8;
        if bytes.len() < FIXED + 32 {
            return Err(TrainError::Checksum);
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(TrainError::Checksum);
        }
        if &body[..8] != CHECKPOINT_MAGIC {
            return Err(TrainError::Format("bad magic bytes".into()));
        }
        let version = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_VERSION {
            return Err(TrainError::Version { found: version, expected: CHECKPOINT_VERSION });
        }
        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = FIXED.checked_add(header_len).filter(|&e| e <= body.len()).ok_or_else(|| TrainError::Format("header overruns file".into()))?;
        let header: Header = serde_json::from_slice(&body[FIXED..header_end])?;
        if header.dtype != T::DTYPE {
            return Err(TrainError::Incompatible(format!("checkpoint holds {} values, reader expects {}", header.dtype, T::DTYPE)));
        }

        let mut params: ModelParams<T> = init_params(&header.model, 0)?;
        let mut cursor = header_end;
        let read = |dst: &mut [T], cursor: &mut usize| -> Result<(), TrainError> {
            let need = dst.len() * T::BYTES;
            let src = body.get(*cursor..*cursor + need).ok_or_else(|| TrainError::Format("data ends early".into()))?;
            for (d, chunk) in dst.iter_mut().zip(src.chunks_exact(T::BYTES)) {
                *d = T::read_le(chunk);
            }
            *cursor += need;
            Ok(())
        };
        {
            let slots = params.tensors_mut();
            if slots.len() != header.tensors.len() {
                return Err(TrainError::Incompatible(format!("{} tensors stored, model has {}", header.tensors.len(), slots.len())));
            }
            for ((name, _, dst), entry) in slots.into_iter().zip(&header.tensors) {
                if name != entry.name || dst.len() != entry.len {
                    return Err(TrainError::Incompatible(format!("tensor {} ({}) does not match {name} ({})", entry.name, entry.len, dst.len())));
                }
                read(dst, &mut cursor)?;
            }
        }
        let mut first: Vec<Vec<T>> = header.optimizer.slots.iter().map(|&n| vec![T::zero(); n]).collect();
        let mut second = first.clone();
        for v in first.iter_mut().chain(second.iter_mut()) {
            read(v, &mut cursor)?;
        }
        if cursor != body.len() {
            return Err(TrainError::Format(format!("{} trailing bytes", body.len() - cursor)));
        }
        let optimizer = Adam { config: header.optimizer.config, step: header.optimizer.step, first, second };
        Ok(Self {
            stage: header.stage,
            params,
            optimizer,
            epoch: header.epoch,
            step: header.step,
            pretrain: header.pretrain,
            finetune: header.finetune,
            seed_lineage: header.seed_lineage,
        })
    }
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: &Path) -> Result<(), TrainError> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, TrainError> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}
