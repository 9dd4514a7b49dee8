use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, SeedRecord, Stage};
use super::curve::{CurveLog, CurveRecord};
use super::TrainError;
use crate::audio::Corpus;
use crate::model::{contrastive_objective, ModelConfig, ParamGroup, Signal};
use crate::pairgen::{realize_pair, JndPairRecipe, PairManifest};
use crate::seed::{rng_for, stream};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub batch_pairs: usize,
    pub learning_rate: f64,
    pub epochs: u64,
    /// Stops early once this many optimizer steps have been taken in total.
    pub max_steps: Option<u64>,
    pub projection_enabled: bool,
    pub temperature: f64,
    pub seed: u64,
    /// Samples per clip fed to the encoder; longer pairs are cropped at one
    /// offset shared by both members, shorter ones zero-padded.
    pub crop_len: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            batch_pairs: 8,
            learning_rate: 1e-3,
            epochs: 45,
            max_steps: None,
            projection_enabled: false,
            temperature: 1.0,
            seed: 0,
            crop_len: 32_000,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if self.batch_pairs < 2 {
            return bad("batch_pairs must be at least 2 so every anchor has negatives");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if self.crop_len == 0 {
            return bad("crop_len must be positive");
        }
        Ok(())
    }

    /// Fields that may differ between a run and its resumption.
    fn resumable_eq(&self, other: &Self) -> bool {
        let strip = |c: &Self| Self { epochs: 0, max_steps: None, ..c.clone() };
        strip(self) == strip(other)
    }
}

fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[stream::BATCH_ORDER, epoch]));
    order
}

/// Realizes a batch of pairs: rows `2k` and `2k+1` are the two members of
/// `recipes[k]`.
pub fn assemble_batch<T: Scalar>(
    recipes: &[&JndPairRecipe],
    clean: &Corpus<T>,
    noise: &Corpus<T>,
    crop_len: usize,
    seed: u64,
    epoch: u64,
) -> Result<Signal<T>, TrainError> {
    let pairs = recipes
        .par_iter()
        .map(|r| {
            let (a, b) = realize_pair(r, clean, noise)?;
            let offset = if a.len() > crop_len {
                rng_for(seed, &[stream::CROP, epoch, r.index]).gen_range(0..=a.len() - crop_len)
            } else {
                0
            };
            Ok((a.segment(offset, crop_len), b.segment(offset, crop_len)))
        })
        .collect::<Result<Vec<_>, TrainError>>()?;
    let rows: Vec<&[T]> = pairs.iter().flat_map(|(a, b)| [&a.samples[..], &b.samples[..]]).collect();
    Ok(Signal::from_waveforms(&rows))
}

/// Contrastive pretraining of the encoder (and projection head when enabled).
///
/// An epoch is one pass over the manifest in a seeded order, in batches of
/// `batch_pairs` pairs; a final incomplete batch is skipped. Every random
/// choice is keyed on `(seed, epoch)` or `(seed, step)`, so resuming from a
/// checkpoint replays exactly the steps an uninterrupted run would take.
/// `on_epoch` sees the state after each completed epoch.
pub fn pretrain<T: Scalar>(
    cfg: &PretrainConfig,
    model: &ModelConfig,
    manifest: &PairManifest,
    clean: &Corpus<T>,
    noise: &Corpus<T>,
    resume: Option<Checkpoint<T>>,
    mut on_epoch: impl FnMut(&Checkpoint<T>, &CurveLog) -> Result<(), TrainError>,
) -> Result<(Checkpoint<T>, CurveLog), TrainError> {
    cfg.validate()?;
    let model_cfg = model.clone().with_projection(cfg.projection_enabled);
    model_cfg.validate()?;
    if manifest.len() < cfg.batch_pairs {
        return Err(TrainError::InvalidConfig(format!(
            "manifest has {} pairs, fewer than one batch of {}",
            manifest.len(),
            cfg.batch_pairs
        )));
    }
    for r in &manifest.recipes {
        if clean.get(&r.clean_id).is_none() || noise.get(&r.noise_id).is_none() {
            return Err(TrainError::Data(format!("pair {} refers to clips missing from the corpora", r.index)));
        }
    }

    let mut state = match resume {
        Some(mut c) => {
            if c.stage != Stage::Pretrain {
                return Err(TrainError::Incompatible(format!("cannot resume pretraining from a {:?} checkpoint", c.stage)));
            }
            if c.params.config != model_cfg {
                return Err(TrainError::Incompatible("model configuration differs from the checkpoint".into()));
            }
            if !c.pretrain.as_ref().is_some_and(|p| p.resumable_eq(cfg)) {
                return Err(TrainError::Incompatible("pretraining configuration differs from the checkpoint".into()));
            }
            c.pretrain = Some(cfg.clone());
            c
        }
        None => {
            let mut c = Checkpoint::initial(&model_cfg, cfg.seed)?;
            c.stage = Stage::Pretrain;
            c.optimizer.config.learning_rate = cfg.learning_rate;
            c.pretrain = Some(cfg.clone());
            c.seed_lineage.push(SeedRecord { stage: Stage::Pretrain, seed: cfg.seed });
            c
        }
    };
    state.params.encoder.check_input_len(cfg.crop_len)?;

    let batches_per_epoch = (manifest.len() / cfg.batch_pairs) as u64;
    let total = (cfg.epochs * batches_per_epoch).min(cfg.max_steps.unwrap_or(u64::MAX));
    let groups = [ParamGroup::Encoder, ParamGroup::Projection];
    let temperature = T::of(cfg.temperature);
    let started = Instant::now();
    let mut log = CurveLog::default();
    let mut order: Option<(u64, Vec<usize>)> = None;

    while state.step < total {
        let epoch = state.step / batches_per_epoch;
        let b = (state.step % batches_per_epoch) as usize;
        if order.as_ref().is_none_or(|(e, _)| *e != epoch) {
            order = Some((epoch, epoch_order(cfg.seed, epoch, manifest.len())));
        }
        let idx = &order.as_ref().expect("set above").1[b * cfg.batch_pairs..(b + 1) * cfg.batch_pairs];
        let recipes: Vec<&JndPairRecipe> = idx.iter().map(|&i| &manifest.recipes[i]).collect();
        let batch = assemble_batch(&recipes, clean, noise, cfg.crop_len, cfg.seed, epoch)?;

        let mut dropout = rng_for(cfg.seed, &[stream::DROPOUT, state.step]);
        let step = contrastive_objective(&state.params, &batch, temperature, Some(&mut dropout))?;
        if !step.loss.is_finite() {
            return Err(TrainError::Diverged(state.step + 1));
        }
        state.optimizer.update(&mut state.params, &step.grads, &groups);
        state.params.encoder.update_running_stats(&step.cache);
        state.step += 1;
        log.push(CurveRecord { step: state.step, epoch, loss: step.loss.as_f64() }, started.elapsed().as_secs_f64());
        log::debug!("pretrain step {} epoch {} loss {:.6}", state.step, epoch, step.loss.as_f64());
        if state.step % batches_per_epoch == 0 {
            state.epoch = epoch + 1;
            on_epoch(&state, &log)?;
        }
    }
    Ok((state, log))
}
