use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, SeedRecord, Stage};
use super::curve::{CurveLog, CurveRecord};
use super::data::{LabeledClip, MOS_RANGE};
use super::TrainError;
use crate::audio::{crop_or_pad, AudioClip, CropPolicy};
use crate::model::{init_regressor, regression_objective, ModelError, ModelParams, ParamGroup, Signal};
use crate::optim::{Adam, AdamConfig};
use crate::seed::{rng_for, stream};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FinetuneConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: u64,
    pub max_steps: Option<u64>,
    pub freeze_encoder: bool,
    pub seed: u64,
    /// Training clips are cropped or zero-padded to this many samples.
    pub crop_len: usize,
    pub crop: CropPolicy,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            learning_rate: 1e-3,
            epochs: 250,
            max_steps: None,
            freeze_encoder: false,
            seed: 0,
            crop_len: 32_000,
            crop: CropPolicy::RandomCrop,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size < 2 {
            return Err(TrainError::InvalidConfig("batch_size must be at least 2 for batch statistics".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.crop_len == 0 {
            return Err(TrainError::InvalidConfig("crop_len must be positive".into()));
        }
        Ok(())
    }

    fn resumable_eq(&self, other: &Self) -> bool {
        let strip = |c: &Self| Self { epochs: 0, max_steps: None, ..c.clone() };
        strip(self) == strip(other)
    }
}

/// Eval-mode MOS for a whole clip; clips shorter than the receptive field
/// are zero-padded up to it.
pub fn predict_clip<T: Scalar>(params: &ModelParams<T>, clip: &AudioClip<T>) -> Result<T, ModelError> {
    let rf = params.config.encoder.receptive_field();
    if clip.len() < rf {
        params.predict_mos(&clip.segment(0, rf).samples)
    } else {
        params.predict_mos(&clip.samples)
    }
}

/// MOS fine-tuning with a regression head on the encoder.
///
/// Starting from a pretraining (or freshly initialized) checkpoint attaches a
/// new regression head and optimizer; starting from a fine-tuning checkpoint
/// resumes it. With `freeze_encoder` the encoder runs in eval mode and is
/// left untouched, running statistics included.
pub fn finetune<T: Scalar>(
    cfg: &FinetuneConfig,
    start: Checkpoint<T>,
    train: &[LabeledClip<T>],
    mut on_epoch: impl FnMut(&Checkpoint<T>, &CurveLog) -> Result<(), TrainError>,
) -> Result<(Checkpoint<T>, CurveLog), TrainError> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::Data("fine-tuning set is empty".into()));
    }
    if let Some(s) = train.iter().find(|s| !(MOS_RANGE.0..=MOS_RANGE.1).contains(&s.mos)) {
        return Err(TrainError::LabelRange { path: s.id.clone(), mos: s.mos });
    }
    start.params.encoder.check_input_len(cfg.crop_len)?;

    let mut state = if start.stage == Stage::Finetune {
        if !start.finetune.as_ref().is_some_and(|f| f.resumable_eq(cfg)) {
            return Err(TrainError::Incompatible("fine-tuning configuration differs from the checkpoint".into()));
        }
        Checkpoint { finetune: Some(cfg.clone()), ..start }
    } else {
        let mut params = start.params;
        params.regressor =
            Some(init_regressor(&params.config.regressor, |i| rng_for(cfg.seed, &[stream::HEAD_INIT, 2, i as u64])));
        let optimizer = Adam::new(AdamConfig { learning_rate: cfg.learning_rate, ..AdamConfig::default() }, &params);
        let mut seed_lineage = start.seed_lineage;
        seed_lineage.push(SeedRecord { stage: Stage::Finetune, seed: cfg.seed });
        Checkpoint {
            stage: Stage::Finetune,
            params,
            optimizer,
            epoch: 0,
            step: 0,
            pretrain: start.pretrain,
            finetune: Some(cfg.clone()),
            seed_lineage,
        }
    };

    let n = train.len();
    let batch = cfg.batch_size.min(n);
    let batches_per_epoch = (n / batch) as u64;
    let total = (cfg.epochs * batches_per_epoch).min(cfg.max_steps.unwrap_or(u64::MAX));
    let groups: &[ParamGroup] = if cfg.freeze_encoder { &[ParamGroup::Regressor] } else { &[ParamGroup::Encoder, ParamGroup::Regressor] };
    let started = Instant::now();
    let mut log = CurveLog::default();
    let mut order: Option<(u64, Vec<usize>)> = None;

    while state.step < total {
        let epoch = state.step / batches_per_epoch;
        let b = (state.step % batches_per_epoch) as usize;
        if order.as_ref().is_none_or(|(e, _)| *e != epoch) {
            let mut o: Vec<usize> = (0..n).collect();
            o.shuffle(&mut rng_for(cfg.seed, &[stream::BATCH_ORDER, epoch]));
            order = Some((epoch, o));
        }
        let idx = &order.as_ref().expect("set above").1[b * batch..(b + 1) * batch];
        let clips = idx
            .iter()
            .map(|&i| {
                let mut rng = rng_for(cfg.seed, &[stream::CROP, state.step, i as u64]);
                crop_or_pad(&train[i].clip, cfg.crop_len, cfg.crop, &mut rng)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows: Vec<&[T]> = clips.iter().map(|c| &c.samples[..]).collect();
        let targets: Vec<T> = idx.iter().map(|&i| T::of(train[i].mos)).collect();

        let step = regression_objective(&state.params, &Signal::from_waveforms(&rows), &targets, !cfg.freeze_encoder)?;
        if !step.loss.is_finite() {
            return Err(TrainError::Diverged(state.step + 1));
        }
        state.optimizer.update(&mut state.params, &step.grads, groups);
        if let Some(cache) = &step.cache {
            state.params.encoder.update_running_stats(cache);
        }
        state.step += 1;
        log.push(CurveRecord { step: state.step, epoch, loss: step.loss.as_f64() }, started.elapsed().as_secs_f64());
        log::debug!("finetune step {} epoch {} loss {:.6}", state.step, epoch, step.loss.as_f64());
        if state.step % batches_per_epoch == 0 {
            state.epoch = epoch + 1;
            on_epoch(&state, &log)?;
        }
    }
    Ok((state, log))
}
