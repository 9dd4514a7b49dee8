//! Agreement metrics between predicted and ground-truth scores.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rayon::prelude::*;

use crate::audio::AudioClip;
use crate::model::{ModelError, ModelParams};
use crate::train::{predict_clip, LabeledClip};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("inputs have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation undefined: {0} has zero variance")]
    ZeroVariance(&'static str),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("prediction failed for {id}: {source}")]
    Predict { id: String, source: ModelError },
}

fn check<T: Scalar>(x: &[T], y: &[T], min: usize) -> Result<(), MetricError> {
    if x.len() != y.len() {
        return Err(MetricError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(MetricError::TooFew { needed: min, got: x.len() });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(MetricError::NonFinite);
    }
    Ok(())
}

fn mean<T: Scalar>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::of_usize(x.len())
}

/// Pearson product-moment correlation.
pub fn pcc<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check(x, y, 2)?;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&a, &b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxy += da * db;
        sxx += da * da;
        syy += db * db;
    }
    if sxx == T::zero() {
        return Err(MetricError::ZeroVariance("x"));
    }
    if syy == T::zero() {
        return Err(MetricError::ZeroVariance("y"));
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    Ok(r.max(-T::one()).min(T::one()))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Scalar>(x: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).expect("finite values"));
    let mut ranks = vec![T::zero(); x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        // positions i..=j hold ranks i+1..=j+1
        let rank = T::of((i + j) as f64 / 2.0 + 1.0);
        for &idx in &order[i..=j] {
            ranks[idx] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check(x, y, 2)?;
    pcc(&average_ranks(x), &average_ranks(y))
}

pub fn rmse<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check(x, y, 1)?;
    Ok(mean(&x.iter().zip(y).map(|(&a, &b)| (a - b) * (a - b)).collect::<Vec<_>>()).sqrt())
}

pub fn mae<T: Scalar>(x: &[T], y: &[T]) -> Result<T, MetricError> {
    check(x, y, 1)?;
    Ok(mean(&x.iter().zip(y).map(|(&a, &b)| (a - b).abs()).collect::<Vec<_>>()))
}

/// A correlation that is either a number or explicitly undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Correlation {
    Defined(f64),
    Undefined,
}

impl Correlation {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Defined(v) => Some(v),
            Self::Undefined => None,
        }
    }

    fn from_result<T: Scalar>(r: Result<T, MetricError>) -> Result<Self, MetricError> {
        match r {
            Ok(v) => Ok(Self::Defined(v.as_f64())),
            Err(MetricError::ZeroVariance(_)) => Ok(Self::Undefined),
            Err(e) => Err(e),
        }
    }
}

impl fmt::Display for Correlation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Defined(v) => write!(f, "{v:.4}"),
            Self::Undefined => f.write_str("undefined"),
        }
    }
}

/// The four agreement metrics over one labelled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub pcc: Correlation,
    pub srcc: Correlation,
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
    pub dataset_id: String,
    pub checkpoint_id: String,
}

impl EvalReport {
    /// Computes all metrics; a zero-variance side yields undefined correlations
    /// while RMSE and MAE are still reported.
    pub fn compute<T: Scalar>(pred: &[T], truth: &[T], dataset_id: &str, checkpoint_id: &str) -> Result<Self, MetricError> {
        check(pred, truth, 2)?;
        Ok(Self {
            pcc: Correlation::from_result(pcc(pred, truth))?,
            srcc: Correlation::from_result(srcc(pred, truth))?,
            rmse: rmse(pred, truth)?.as_f64(),
            mae: mae(pred, truth)?.as_f64(),
            n: pred.len(),
            dataset_id: dataset_id.to_string(),
            checkpoint_id: checkpoint_id.to_string(),
        })
    }

    /// One machine-parseable line, metrics in PCC, SRCC, RMSE, MAE order.
    pub fn summary_line(&self) -> String {
        format!(
            "EVAL pcc={} srcc={} rmse={:.4} mae={:.4} n={} dataset={} checkpoint={}",
            self.pcc, self.srcc, self.rmse, self.mae, self.n, self.dataset_id, self.checkpoint_id
        )
    }

    /// Tab-separated table with a header row.
    pub fn to_table(&self) -> String {
        format!(
            "pcc\tsrcc\trmse\tmae\tn\tdataset\tcheckpoint\n{}\t{}\t{:.6}\t{:.6}\t{}\t{}\t{}\n",
            self.pcc, self.srcc, self.rmse, self.mae, self.n, self.dataset_id, self.checkpoint_id
        )
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_table())
    }
}

/// Anything that maps a clip to a MOS estimate.
pub trait MosPredictor<T>: Sync {
    fn predict(&self, clip: &AudioClip<T>) -> Result<T, ModelError>;
}

impl<T: Scalar> MosPredictor<T> for ModelParams<T> {
    fn predict(&self, clip: &AudioClip<T>) -> Result<T, ModelError> {
        predict_clip(self, clip)
    }
}

impl<T, F> MosPredictor<T> for F
where
    F: Fn(&AudioClip<T>) -> Result<T, ModelError> + Sync,
{
    fn predict(&self, clip: &AudioClip<T>) -> Result<T, ModelError> {
        self(clip)
    }
}

/// Predicts every clip (in parallel) and scores the predictions. Samples are
/// processed in id order, so the report does not depend on input order.
pub fn evaluate_model<T: Scalar, P: MosPredictor<T> + ?Sized>(
    predictor: &P,
    dataset: &[LabeledClip<T>],
    dataset_id: &str,
    checkpoint_id: &str,
) -> Result<EvalReport, MetricError> {
    let mut items: Vec<&LabeledClip<T>> = dataset.iter().collect();
    items.sort_by(|a, b| a.id.cmp(&b.id));
    let preds = items
        .par_iter()
        .map(|s| predictor.predict(&s.clip).map_err(|source| MetricError::Predict { id: s.id.clone(), source }))
        .collect::<Result<Vec<T>, _>>()?;
    let truth: Vec<T> = items.iter().map(|s| T::of(s.mos)).collect();
    EvalReport::compute(&preds, &truth, dataset_id, checkpoint_id)
}
