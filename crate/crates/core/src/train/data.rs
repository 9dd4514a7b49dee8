use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::audio::{load_audio, resample_to_16k, AudioClip, DownmixPolicy};
use crate::seed::{rng_for, stream};
use crate::Scalar;

pub const MOS_RANGE: (f64, f64) = (1.0, 5.0);

/// One row of a label table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosSample {
    /// WAV path relative to the dataset root.
    pub path: String,
    pub mos: f64,
}

impl MosSample {
    pub fn new(path: impl Into<String>, mos: f64) -> Result<Self, TrainError> {
        let path = path.into();
        if !(MOS_RANGE.0..=MOS_RANGE.1).contains(&mos) {
            return Err(TrainError::LabelRange { path, mos });
        }
        Ok(Self { path, mos })
    }
}

/// A decoded clip with its MOS label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip<T> {
    pub id: String,
    pub clip: AudioClip<T>,
    pub mos: f64,
}

/// Reads `path,mos` rows (comma or tab separated, optional header).
pub fn read_label_table(path: &Path) -> Result<Vec<MosSample>, TrainError> {
    let text = std::fs::read_to_string(path)?;
    let delimiter = if text.lines().next().is_some_and(|l| l.contains('\t')) { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() < 2 {
            return Err(TrainError::Data(format!("{}: row {} needs a path and a score", path.display(), i + 1)));
        }
        match record[1].parse::<f64>() {
            Ok(mos) => out.push(MosSample::new(&record[0], mos)?),
            Err(_) if i == 0 => {}
            Err(e) => return Err(TrainError::Data(format!("{}: row {}: {e}", path.display(), i + 1))),
        }
    }
    if out.is_empty() {
        return Err(TrainError::Data(format!("{} has no labeled rows", path.display())));
    }
    Ok(out)
}

/// Decodes and resamples every labeled clip under `root`.
pub fn load_mos_dataset<T: Scalar>(root: &Path, samples: &[MosSample]) -> Result<Vec<LabeledClip<T>>, TrainError> {
    samples
        .iter()
        .map(|s| {
            let clip = load_audio(&root.join(&s.path), DownmixPolicy::Average)?;
            Ok(LabeledClip { id: s.path.clone(), clip: resample_to_16k(&clip)?, mos: s.mos })
        })
        .collect()
}

/// `(train, val, test)`.
pub type Split<S> = (Vec<S>, Vec<S>, Vec<S>);

/// Seeded disjoint partition; sizes are rounded and the test part takes the rest.
pub fn split_dataset<S: Clone>(samples: &[S], ratios: (f64, f64, f64), seed: u64) -> Result<Split<S>, TrainError> {
    let (a, b, c) = ratios;
    if [a, b, c].iter().any(|r| !(0.0..=1.0).contains(r)) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(TrainError::InvalidConfig(format!("split ratios {ratios:?} must be in [0,1] and sum to 1")));
    }
    let n = samples.len();
    let n_train = ((n as f64) * a).round() as usize;
    let n_val = (((n as f64) * b).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, &[stream::SPLIT]));
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    Ok((pick(&order[..n_train]), pick(&order[n_train..n_train + n_val]), pick(&order[n_train + n_val..])))
}
