//! Linear soft-margin SVM fit by seeded minibatch subgradient descent.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{FeatureKind, JndError, PairFeature};
use crate::seed::{rng_for, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JndLabel {
    Within,
    Beyond,
}

impl JndLabel {
    fn sign(self) -> f64 {
        match self {
            Self::Within => 1.0,
            Self::Beyond => -1.0,
        }
    }
}

impl std::str::FromStr for JndLabel {
    type Err = JndError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "within" | "1" | "+1" | "same" => Ok(Self::Within),
            "beyond" | "0" | "-1" | "different" => Ok(Self::Beyond),
            other => Err(JndError::Parse(format!("unknown label {other:?}"))),
        }
    }
}

impl std::fmt::Display for JndLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Within => "within",
            Self::Beyond => "beyond",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// Margin parameter of `½‖w‖² + C·Σ hinge`.
    pub c: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 200, batch_size: 16, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmTraining {
    pub config: SvmConfig,
    pub n_examples: usize,
    pub accuracy: f64,
    /// All labels were equal; the model is a constant classifier.
    pub degenerate: bool,
    /// Primal objective after each epoch (standardized feature space).
    pub objective_history: Vec<f64>,
}

/// Linear decision `w·x + b`; non-negative means within JND.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: String,
    pub feature_kind: FeatureKind,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub training: SvmTraining,
}

impl SvmModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.bias
    }

    pub fn save(&self, path: &Path) -> Result<(), JndError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, JndError> {
        let model: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if model.weights.len() != model.feature_kind.dim() {
            return Err(JndError::Parse(format!("{} weights for {} features", model.weights.len(), model.feature_kind)));
        }
        if model.weights.iter().chain([&model.bias]).any(|v| !v.is_finite()) {
            return Err(JndError::Parse("non-finite SVM weights".into()));
        }
        Ok(model)
    }
}

fn primal(w: &[f64], b: f64, z: &[Vec<f64>], y: &[f64], c: f64) -> f64 {
    let hinge: f64 = z
        .iter()
        .zip(y)
        .map(|(x, &yi)| (1.0 - yi * (w.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + b)).max(0.0))
        .sum();
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + c * hinge
}

/// Fits a linear SVM.
///
/// Features are standardized internally and the solution is mapped back to
/// raw feature space. Each epoch visits the examples in a seeded order; an
/// epoch that raises the primal objective is undone and the step size halved,
/// so the recorded objective never increases.
pub fn train_svm(features: &[PairFeature], labels: &[JndLabel], cfg: &SvmConfig) -> Result<SvmModel, JndError> {
    if features.is_empty() {
        return Err(JndError::Empty("training set"));
    }
    if features.len() != labels.len() {
        return Err(JndError::LabelCount { features: features.len(), labels: labels.len() });
    }
    if !(cfg.c > 0.0 && cfg.c.is_finite()) || cfg.batch_size == 0 {
        return Err(JndError::InvalidConfig(format!("need C > 0 and batch_size > 0, got {cfg:?}")));
    }
    let kind = features[0].kind;
    if let Some(f) = features.iter().find(|f| f.kind != kind) {
        return Err(JndError::KindMismatch { expected: kind, got: f.kind });
    }
    let dim = kind.dim();
    let n = features.len();
    let y: Vec<f64> = labels.iter().map(|l| l.sign()).collect();

    if labels.iter().all(|&l| l == labels[0]) {
        return Ok(SvmModel {
            kernel: "linear".into(),
            feature_kind: kind,
            weights: vec![0.0; dim],
            bias: y[0],
            training: SvmTraining { config: *cfg, n_examples: n, accuracy: 1.0, degenerate: true, objective_history: Vec::new() },
        });
    }

    let mean: Vec<f64> = (0..dim).map(|j| features.iter().map(|f| f.values[j]).sum::<f64>() / n as f64).collect();
    let scale: Vec<f64> = (0..dim)
        .map(|j| {
            let var = features.iter().map(|f| (f.values[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z: Vec<Vec<f64>> = features
        .iter()
        .map(|f| (0..dim).map(|j| (f.values[j] - mean[j]) / scale[j]).collect())
        .collect();

    // per-example form of the objective: λ/2‖w‖² + hinge_i with λ = 1/(C·n)
    let lambda = 1.0 / (cfg.c * n as f64);
    let mut rng = rng_for(cfg.seed, &[stream::SVM]);
    let mut order: Vec<usize> = (0..n).collect();
    let (mut w, mut b) = (vec![0.0; dim], 0.0);
    let mut best = primal(&w, b, &z, &y, cfg.c);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut step_scale = 1.0;
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut w_try, mut b_try) = (w.clone(), b);
        for batch in order.chunks(cfg.batch_size) {
            t += 1;
            let eta = step_scale / (1.0 + t as f64).sqrt();
            let mut gw: Vec<f64> = w_try.iter().map(|v| lambda * v).collect();
            let mut gb = 0.0;
            for &i in batch {
                let m = y[i] * (w_try.iter().zip(&z[i]).map(|(a, v)| a * v).sum::<f64>() + b_try);
                if m < 1.0 {
                    for j in 0..dim {
                        gw[j] -= y[i] * z[i][j] / batch.len() as f64;
                    }
                    gb -= y[i] / batch.len() as f64;
                }
            }
            for j in 0..dim {
                w_try[j] -= eta * gw[j];
            }
            b_try -= eta * gb;
        }
        let obj = primal(&w_try, b_try, &z, &y, cfg.c);
        if obj <= best {
            w = w_try;
            b = b_try;
            best = obj;
        } else {
            step_scale *= 0.5;
        }
        history.push(best);
    }

    // back to raw feature space: w·(x-μ)/s + b
    let weights: Vec<f64> = (0..dim).map(|j| w[j] / scale[j]).collect();
    let bias = b - (0..dim).map(|j| w[j] * mean[j] / scale[j]).sum::<f64>();
    let mut model = SvmModel {
        kernel: "linear".into(),
        feature_kind: kind,
        weights,
        bias,
        training: SvmTraining { config: *cfg, n_examples: n, accuracy: 0.0, degenerate: false, objective_history: history },
    };
    let correct = features
        .iter()
        .zip(labels)
        .filter(|(f, &l)| (model.decision(&f.values) >= 0.0) == (l == JndLabel::Within))
        .count();
    model.training.accuracy = correct as f64 / n as f64;
    Ok(model)
}

/// `(within, margin)`; a margin of exactly zero counts as within.
pub fn svm_predict(model: &SvmModel, feature: &PairFeature) -> Result<(bool, f64), JndError> {
    if feature.kind != model.feature_kind {
        return Err(JndError::KindMismatch { expected: model.feature_kind, got: feature.kind });
    }
    let margin = model.decision(&feature.values);
    Ok((margin >= 0.0, margin))
}
