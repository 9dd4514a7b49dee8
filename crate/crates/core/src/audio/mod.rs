//! Mono waveform buffers and the DSP primitives the rest of the pipeline
//! builds on: WAV I/O, resampling to 16 kHz, power measurement and
//! fixed-length cropping.

mod corpus;
mod resample;
mod wav;

use rand::Rng;
use thiserror::Error;

use crate::Scalar;

pub use corpus::{scan_wav_files, Corpus, MIN_CLIP_POWER};
pub use resample::resample_to_16k;
pub use wav::{load_audio, save_audio, DownmixPolicy};

/// Sample rate every clip is normalized to before mixing or modelling.
pub const TARGET_SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("unsupported WAV encoding in {path}: {detail}")]
    UnsupportedEncoding { path: String, detail: String },
    #[error("cannot write {path}: {source}")]
    Unwritable {
        path: String,
        #[source]
        source: hound::Error,
    },
    #[error("{path} has {channels} channels and the downmix policy rejects multichannel input")]
    Multichannel { path: String, channels: u16 },
    #[error("empty clip")]
    Empty,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("sample rate {0} Hz is below the supported minimum of 8000 Hz")]
    RateTooLow(u32),
    #[error("target length must be positive")]
    ZeroTargetLength,
    #[error("corpus {0} has no usable clips")]
    EmptyCorpus(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A single-channel waveform with its sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> AudioClip<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Self {
        Self { samples, sample_rate }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Checks the invariants required of any clip entering mixing or the model.
    pub fn validate(&self) -> Result<(), AudioError> {
        if self.samples.is_empty() {
            return Err(AudioError::Empty);
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(())
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Copies `len` samples starting at `offset`, zero-filling past the end.
    pub fn segment(&self, offset: usize, len: usize) -> Self {
        let mut samples = vec![T::zero(); len];
        if offset < self.samples.len() {
            let avail = (self.samples.len() - offset).min(len);
            samples[..avail].copy_from_slice(&self.samples[offset..offset + avail]);
        }
        Self { samples, sample_rate: self.sample_rate }
    }

    /// Like [`segment`](Self::segment) but wraps around the end of the clip.
    pub fn segment_looped(&self, offset: usize, len: usize) -> Self {
        let n = self.samples.len();
        let samples = (0..len).map(|i| self.samples[(offset + i) % n]).collect();
        Self { samples, sample_rate: self.sample_rate }
    }
}

/// Mean squared amplitude `(1/L) Σ s[t]²`.
pub fn signal_power<T: Scalar>(clip: &AudioClip<T>) -> Result<T, AudioError> {
    if clip.is_empty() {
        return Err(AudioError::Empty);
    }
    Ok(power_of(&clip.samples))
}

pub(crate) fn power_of<T: Scalar>(samples: &[T]) -> T {
    let sum: T = samples.iter().map(|&s| s * s).sum();
    sum / T::of_usize(samples.len())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CropPolicy {
    RandomCrop,
    CenterCrop,
    /// Keeps the prefix of long clips; pads short clips with trailing zeros.
    ZeroPad,
}

/// Returns a clip of exactly `target_len` samples.
///
/// Clips shorter than the target are always padded with trailing zeros.
/// Longer clips are cropped according to `policy`; only `RandomCrop` consumes
/// randomness.
pub fn crop_or_pad<T: Scalar, R: Rng + ?Sized>(
    clip: &AudioClip<T>,
    target_len: usize,
    policy: CropPolicy,
    rng: &mut R,
) -> Result<AudioClip<T>, AudioError> {
    if target_len == 0 {
        return Err(AudioError::ZeroTargetLength);
    }
    let n = clip.len();
    if n <= target_len {
        return Ok(clip.segment(0, target_len));
    }
    let slack = n - target_len;
    let offset = match policy {
        CropPolicy::RandomCrop => rng.gen_range(0..=slack),
        CropPolicy::CenterCrop => slack / 2,
        CropPolicy::ZeroPad => 0,
    };
    Ok(clip.segment(offset, target_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use proptest::prelude::*;

    fn ramp(n: usize) -> AudioClip<f64> {
        AudioClip::new((0..n).map(|i| i as f64).collect(), 16_000)
    }

    #[test]
    fn power_of_simple_signals() {
        let zero = AudioClip::new(vec![0.0f64; 100], 16_000);
        assert_eq!(signal_power(&zero).unwrap(), 0.0);
        let half = AudioClip::new(vec![0.5f64; 100], 16_000);
        assert_eq!(signal_power(&half).unwrap(), 0.25);
        // 1 kHz sine over exactly 100 periods
        let sine: Vec<f64> = (0..1600)
            .map(|t| (2.0 * std::f64::consts::PI * 1000.0 * t as f64 / 16000.0).sin())
            .collect();
        let p = signal_power(&AudioClip::new(sine, 16_000)).unwrap();
        assert!((p - 0.5).abs() < 1e-6);
        assert!(matches!(
            signal_power(&AudioClip::<f64>::new(vec![], 16_000)),
            Err(AudioError::Empty)
        ));
    }

    #[test]
    fn zero_pad_appends_zeros() {
        let mut rng = rng_for(0, &[]);
        let out = crop_or_pad(&ramp(3), 6, CropPolicy::ZeroPad, &mut rng).unwrap();
        assert_eq!(out.samples, vec![0.0, 1.0, 2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn equal_length_is_identity_for_every_policy() {
        let clip = ramp(10);
        for policy in [CropPolicy::RandomCrop, CropPolicy::CenterCrop, CropPolicy::ZeroPad] {
            let mut rng = rng_for(5, &[]);
            assert_eq!(crop_or_pad(&clip, 10, policy, &mut rng).unwrap(), clip);
        }
    }

    #[test]
    fn center_crop_takes_the_middle() {
        let mut rng = rng_for(0, &[]);
        let out = crop_or_pad(&ramp(10), 4, CropPolicy::CenterCrop, &mut rng).unwrap();
        assert_eq!(out.samples, vec![3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn zero_target_is_rejected() {
        let mut rng = rng_for(0, &[]);
        assert!(crop_or_pad(&ramp(4), 0, CropPolicy::ZeroPad, &mut rng).is_err());
    }

    #[test]
    fn validate_flags_nan() {
        let clip = AudioClip::new(vec![0.0f32, f32::NAN], 16_000);
        assert!(matches!(clip.validate(), Err(AudioError::NonFinite(1))));
    }

    proptest! {
        #[test]
        fn power_scales_quadratically(gain in -10.0f64..10.0, seed in 0u64..1000) {
            use rand::Rng;
            let mut rng = rng_for(seed, &[]);
            let clip = AudioClip::new((0..257).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>(), 16_000);
            let p = signal_power(&clip).unwrap();
            let q = signal_power(&clip.scaled(gain)).unwrap();
            let expected = gain * gain * p;
            prop_assert!((q - expected).abs() <= 1e-9 * expected.abs().max(f64::MIN_POSITIVE));
        }

        #[test]
        fn random_crop_is_exact_length_and_seeded(len in 1usize..400, target in 1usize..400, seed in any::<u64>()) {
            let clip = ramp(len);
            let a = crop_or_pad(&clip, target, CropPolicy::RandomCrop, &mut rng_for(seed, &[])).unwrap();
            let b = crop_or_pad(&clip, target, CropPolicy::RandomCrop, &mut rng_for(seed, &[])).unwrap();
            prop_assert_eq!(a.len(), target);
            prop_assert_eq!(a, b);
        }
    }
}
