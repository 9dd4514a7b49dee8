//! Within-JND decisions for generated pairs: objective pair features, a
//! linear SVM over them, and manifest-wide validation.

mod pesq;
mod svm;
mod validate;

pub use pesq::{CommandPesq, PesqScorer, PESQ_RANGE};
pub use svm::{svm_predict, train_svm, JndLabel, SvmConfig, SvmModel, SvmTraining};
pub use validate::{read_labeled_features, validate_manifest, write_labeled_features, PairVerdict, ValidationReport};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioClip, AudioError};
use crate::pairgen::PairGenError;
use crate::Scalar;

/// Finite stand-in for an infinite SI-SDR when used as a feature.
pub const SI_SDR_CAP_DB: f64 = 100.0;

#[derive(Debug, Error)]
pub enum JndError {
    #[error("signals differ in length ({reference} vs {estimate})")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("reference signal has zero power")]
    ZeroReference,
    #[error("feature kind {0} needs a PESQ scorer but none is configured")]
    MissingExtractor(FeatureKind),
    #[error("model expects {expected} features, got {got}")]
    KindMismatch { expected: FeatureKind, got: FeatureKind },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("{features} features but {labels} labels")]
    LabelCount { features: usize, labels: usize },
    #[error("invalid SVM configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite feature value {0}")]
    NonFinite(f64),
    #[error("PESQ scorer failed: {0}")]
    Extractor(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    PairGen(#[from] PairGenError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scale-invariant SDR in dB of `estimate` against `reference`.
///
/// Returns `+inf` when the residual vanishes to within rounding of the scalar
/// type, and `-inf` when the estimate has no component along the reference.
pub fn si_sdr<T: Scalar>(reference: &AudioClip<T>, estimate: &AudioClip<T>) -> Result<f64, JndError> {
    if reference.len() != estimate.len() {
        return Err(JndError::LengthMismatch { reference: reference.len(), estimate: estimate.len() });
    }
    let (mut dot, mut ref_energy) = (0.0f64, 0.0f64);
    for (&s, &e) in reference.samples.iter().zip(&estimate.samples) {
        dot += s.as_f64() * e.as_f64();
        ref_energy += s.as_f64() * s.as_f64();
    }
    if ref_energy == 0.0 {
        return Err(JndError::ZeroReference);
    }
    let alpha = dot / ref_energy;
    let (mut target_energy, mut residual_energy) = (0.0f64, 0.0f64);
    for (&s, &e) in reference.samples.iter().zip(&estimate.samples) {
        let t = alpha * s.as_f64();
        target_energy += t * t;
        residual_energy += (e.as_f64() - t).powi(2);
    }
    if target_energy == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let floor = 16.0 * T::epsilon().as_f64();
    if residual_energy <= floor * floor * target_energy {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (target_energy / residual_energy).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Pesq,
    SiSdr,
    Both,
}

impl FeatureKind {
    pub fn dim(self) -> usize {
        match self {
            Self::Pesq | Self::SiSdr => 1,
            Self::Both => 2,
        }
    }

    pub fn needs_pesq(self) -> bool {
        matches!(self, Self::Pesq | Self::Both)
    }

    /// Column names in feature files.
    pub fn columns(self) -> &'static [&'static str] {
        match self {
            Self::Pesq => &["pesq"],
            Self::SiSdr => &["si_sdr"],
            Self::Both => &["pesq", "si_sdr"],
        }
    }

    pub fn from_columns(cols: &[&str]) -> Option<Self> {
        [Self::Pesq, Self::SiSdr, Self::Both].into_iter().find(|k| k.columns() == cols)
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pesq => "pesq",
            Self::SiSdr => "si_sdr",
            Self::Both => "both",
        })
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = JndError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pesq" => Ok(Self::Pesq),
            "si_sdr" | "si-sdr" => Ok(Self::SiSdr),
            "both" => Ok(Self::Both),
            other => Err(JndError::Parse(format!("unknown feature kind {other:?}"))),
        }
    }
}

/// Objective similarity of a pair, computed with the less noisy member as reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFeature {
    pub kind: FeatureKind,
    /// PESQ first, then SI-SDR, as selected by `kind`.
    pub values: Vec<f64>,
}

impl PairFeature {
    pub fn new(kind: FeatureKind, values: Vec<f64>) -> Result<Self, JndError> {
        if values.len() != kind.dim() {
            return Err(JndError::Parse(format!("{kind} takes {} values, got {}", kind.dim(), values.len())));
        }
        if let Some(&v) = values.iter().find(|v| !v.is_finite()) {
            return Err(JndError::NonFinite(v));
        }
        Ok(Self { kind, values })
    }
}

/// Feature vector for a pair; `clip_hi` is the higher-SNR member.
pub fn extract_pair_feature<T: Scalar>(
    clip_hi: &AudioClip<T>,
    clip_lo: &AudioClip<T>,
    kind: FeatureKind,
    pesq: Option<&dyn PesqScorer>,
) -> Result<PairFeature, JndError> {
    let mut values = Vec::with_capacity(kind.dim());
    if kind.needs_pesq() {
        let scorer = pesq.ok_or(JndError::MissingExtractor(kind))?;
        let to_f32 = |c: &AudioClip<T>| c.samples.iter().map(|s| s.to_f32().unwrap_or(0.0)).collect::<Vec<_>>();
        values.push(scorer.score(&to_f32(clip_hi), &to_f32(clip_lo), clip_hi.sample_rate)?);
    }
    if matches!(kind, FeatureKind::SiSdr | FeatureKind::Both) {
        values.push(si_sdr(clip_hi, clip_lo)?.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB));
    }
    PairFeature::new(kind, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairgen::mix_at_snr;
    use crate::seed::rng_for;
    use crate::synth;
    use proptest::prelude::*;
    use rand::Rng;

    fn clip(v: Vec<f64>) -> AudioClip<f64> {
        AudioClip::new(v, 16_000)
    }

    #[test]
    fn identity_and_scaling_give_infinity() {
        let r = synth::speech_like::<f64>(4000, 3);
        assert_eq!(si_sdr(&r, &r).unwrap(), f64::INFINITY);
        assert_eq!(si_sdr(&r, &r.scaled(0.37)).unwrap(), f64::INFINITY);
        let r32 = synth::speech_like::<f32>(4000, 3);
        assert_eq!(si_sdr(&r32, &r32.scaled(2.9)).unwrap(), f64::INFINITY);
    }

    #[test]
    fn orthogonal_residual_gives_exact_ratio() {
        // s = (1,1,0,0), e ⟂ s with |e|^2 = |s|^2 / 10
        let e = (2.0f64 / 10.0).sqrt() / 2f64.sqrt();
        let reference = clip(vec![1.0, 1.0, 0.0, 0.0]);
        let estimate = clip(vec![1.0 + e, 1.0 - e, 0.0, 0.0]);
        assert!((si_sdr(&reference, &estimate).unwrap() - 10.0).abs() < 1e-6);
        let estimate = clip(vec![1.0, 1.0, e, -e]);
        assert!((si_sdr(&reference, &estimate).unwrap() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn guards() {
        let r = clip(vec![1.0, 2.0]);
        assert!(matches!(si_sdr(&r, &clip(vec![1.0])), Err(JndError::LengthMismatch { .. })));
        assert!(matches!(si_sdr(&clip(vec![0.0, 0.0]), &r), Err(JndError::ZeroReference)));
        assert_eq!(si_sdr(&r, &clip(vec![2.0, -1.0])).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn decreasing_in_orthogonal_noise_power() {
        let n = 512;
        let mut rng = rng_for(5, &[]);
        let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // Gram-Schmidt the noise against the reference
        let k = raw.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / s.iter().map(|v| v * v).sum::<f64>();
        let noise: Vec<f64> = raw.iter().zip(&s).map(|(a, b)| a - k * b).collect();
        let mut last = f64::INFINITY;
        for g in [1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0, 3.0] {
            let est = clip(s.iter().zip(&noise).map(|(a, b)| a + g * b).collect());
            let v = si_sdr(&clip(s.clone()), &est).unwrap();
            assert!(v < last, "{v} !< {last}");
            last = v;
        }
    }

    #[test]
    fn pair_features() {
        let r = synth::speech_like::<f64>(4000, 3);
        let f = extract_pair_feature(&r, &r, FeatureKind::SiSdr, None).unwrap();
        assert_eq!(f.values, vec![SI_SDR_CAP_DB]);
        assert!(matches!(
            extract_pair_feature(&r, &r, FeatureKind::Pesq, None),
            Err(JndError::MissingExtractor(FeatureKind::Pesq))
        ));
        let stub = |_: &[f32], _: &[f32], _: u32| -> Result<f64, JndError> { Ok(3.25) };
        let f = extract_pair_feature(&r, &r, FeatureKind::Both, Some(&stub)).unwrap();
        assert_eq!(f.values, vec![3.25, SI_SDR_CAP_DB]);
    }

    #[test]
    fn synthesized_pair_has_finite_positive_si_sdr() {
        let clean = synth::speech_like::<f64>(8000, 1);
        let noise = synth::coloured_noise::<f64>(8000, 2);
        let a = mix_at_snr(&clean, &noise, 5.1).unwrap();
        let b = mix_at_snr(&clean, &noise, 3.2).unwrap();
        let f = extract_pair_feature(&a, &b, FeatureKind::SiSdr, None).unwrap();
        assert!(f.values[0].is_finite() && f.values[0] > 0.0, "{:?}", f.values);
    }

    proptest! {
        #[test]
        fn scale_invariance(seed in any::<u64>(), alpha in 1e-3f64..1e3, g in 0.01f64..2.0) {
            let mut rng = rng_for(seed, &[]);
            let s: Vec<f64> = (0..256).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let est: Vec<f64> = s.iter().map(|v| v + g * rng.gen_range(-1.0..1.0)).collect();
            let base = si_sdr(&clip(s.clone()), &clip(est.clone())).unwrap();
            let scaled = si_sdr(&clip(s), &clip(est.iter().map(|v| alpha * v).collect())).unwrap();
            prop_assert!((base - scaled).abs() < 1e-6, "{} vs {}", base, scaled);
        }
    }
}
