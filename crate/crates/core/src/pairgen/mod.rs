//! JND pair synthesis: one clean utterance and one noise excerpt mixed at two
//! SNRs drawn from a shared window, so the two members differ only in the
//! noise gain.

mod manifest;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{power_of, AudioClip, AudioError};
use crate::Scalar;

pub use manifest::{build_manifest, realize_pair, ManifestHeader, PairManifest, MANIFEST_FORMAT, MANIFEST_VERSION};

#[derive(Debug, Error)]
pub enum PairGenError {
    #[error("invalid pair generation config: {0}")]
    InvalidConfig(String),
    #[error("clean and noise lengths differ ({clean} vs {noise})")]
    LengthMismatch { clean: usize, noise: usize },
    #[error("{0} signal has zero power")]
    ZeroPower(&'static str),
    #[error("{0} corpus is empty")]
    EmptyCorpus(&'static str),
    #[error("recipe references unknown clip {0}")]
    UnknownClip(String),
    #[error("manifest parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("manifest format {found} is not supported (expected {expected})")]
    Version { found: String, expected: String },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairGenConfig {
    /// Global SNR range `(lo, hi)` in dB that every generated SNR falls in.
    pub snr_global_range: (f64, f64),
    /// Width of the per-pair sampling window in dB.
    pub window_width_db: f64,
    pub pair_count: usize,
    /// Length in samples of every realized clip.
    pub crop_len: usize,
    pub seed: u64,
}

impl Default for PairGenConfig {
    fn default() -> Self {
        Self {
            snr_global_range: (-3.0, 9.0),
            window_width_db: 6.0,
            pair_count: 8,
            crop_len: 32_000,
            seed: 0,
        }
    }
}

impl PairGenConfig {
    pub fn validate(&self) -> Result<(), PairGenError> {
        let (lo, hi) = self.snr_global_range;
        let bad = |m: &str| Err(PairGenError::InvalidConfig(m.to_string()));
        if !(lo.is_finite() && hi.is_finite() && self.window_width_db.is_finite()) {
            return bad("SNR bounds must be finite");
        }
        if self.window_width_db < 0.0 {
            return bad("window width must be non-negative");
        }
        if hi - lo < self.window_width_db {
            return bad("SNR range is narrower than the window width");
        }
        if self.crop_len == 0 {
            return bad("crop length must be positive");
        }
        Ok(())
    }
}

/// Everything needed to regenerate one JND pair bit-exactly from the corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JndPairRecipe {
    pub index: u64,
    pub clean_id: String,
    pub noise_id: String,
    pub snr_a_db: f64,
    pub snr_b_db: f64,
    /// Noise gain producing `snr_a_db`.
    pub scale_m: f64,
    /// Noise gain producing `snr_b_db`.
    pub scale_n: f64,
    pub clean_offset: usize,
    /// Shared by both members; the excerpt wraps around short noise files.
    pub noise_offset: usize,
    pub len: usize,
    pub seed: u64,
}

impl JndPairRecipe {
    pub fn delta_snr_db(&self) -> f64 {
        (self.snr_a_db - self.snr_b_db).abs()
    }
}

/// Draws a window of `cfg.window_width_db` placed uniformly inside the global range.
pub fn sample_snr_window<R: Rng + ?Sized>(rng: &mut R, cfg: &PairGenConfig) -> (f64, f64) {
    let (lo, hi) = cfg.snr_global_range;
    let slack = hi - lo - cfg.window_width_db;
    let w_lo = lo + rng.gen::<f64>() * slack;
    (w_lo, w_lo + cfg.window_width_db)
}

/// Two independent uniform draws inside `window`.
pub fn sample_snr_pair<R: Rng + ?Sized>(rng: &mut R, window: (f64, f64)) -> (f64, f64) {
    let width = window.1 - window.0;
    let a = window.0 + rng.gen::<f64>() * width;
    let b = window.0 + rng.gen::<f64>() * width;
    (a, b)
}

/// Gain for `noise` such that `clean + gain·noise` has the requested SNR.
pub fn noise_scale_for_snr<T: Scalar>(clean: &AudioClip<T>, noise: &AudioClip<T>, snr_db: f64) -> Result<T, PairGenError> {
    if clean.len() != noise.len() {
        return Err(PairGenError::LengthMismatch { clean: clean.len(), noise: noise.len() });
    }
    if clean.is_empty() {
        return Err(AudioError::Empty.into());
    }
    let p_clean = power_of(&clean.samples);
    let p_noise = power_of(&noise.samples);
    if p_clean <= T::zero() {
        return Err(PairGenError::ZeroPower("clean"));
    }
    if p_noise <= T::zero() {
        return Err(PairGenError::ZeroPower("noise"));
    }
    let attenuation = T::of(10f64.powf(-snr_db / 10.0));
    Ok((p_clean / p_noise * attenuation).sqrt())
}

fn mix_with_gain<T: Scalar>(clean: &AudioClip<T>, noise: &AudioClip<T>, gain: T) -> AudioClip<T> {
    let samples = clean.samples.iter().zip(&noise.samples).map(|(&c, &n)| c + gain * n).collect();
    AudioClip::new(samples, clean.sample_rate)
}

/// `clean + scale·noise` with the scale from [`noise_scale_for_snr`].
pub fn mix_at_snr<T: Scalar>(clean: &AudioClip<T>, noise: &AudioClip<T>, snr_db: f64) -> Result<AudioClip<T>, PairGenError> {
    let gain = noise_scale_for_snr(clean, noise, snr_db)?;
    Ok(mix_with_gain(clean, noise, gain))
}

/// Measured SNR of a mixture given its clean component: `10·log10(P_clean / P_residual)`.
pub fn measured_snr_db<T: Scalar>(clean: &AudioClip<T>, mixture: &AudioClip<T>) -> f64 {
    let p_clean: f64 = clean.samples.iter().map(|s| s.as_f64().powi(2)).sum();
    let p_res: f64 = clean
        .samples
        .iter()
        .zip(&mixture.samples)
        .map(|(c, m)| (m.as_f64() - c.as_f64()).powi(2))
        .sum();
    10.0 * (p_clean / p_res).log10()
}

/// Crops the clean and noise segments a recipe refers to.
pub(crate) fn recipe_segments<T: Scalar>(
    clean: &AudioClip<T>,
    noise: &AudioClip<T>,
    recipe: &JndPairRecipe,
) -> (AudioClip<T>, AudioClip<T>) {
    (
        clean.segment(recipe.clean_offset, recipe.len),
        noise.segment_looped(recipe.noise_offset, recipe.len),
    )
}

/// Mixes the two members of a recipe using its stored gains.
pub(crate) fn realize_from_segments<T: Scalar>(
    clean: &AudioClip<T>,
    noise: &AudioClip<T>,
    recipe: &JndPairRecipe,
) -> (AudioClip<T>, AudioClip<T>) {
    (
        mix_with_gain(clean, noise, T::of(recipe.scale_m)),
        mix_with_gain(clean, noise, T::of(recipe.scale_n)),
    )
}

/// Synthesizes one JND pair and the recipe that regenerates it.
///
/// The SNRs, the clean crop offset and the shared noise offset are drawn from
/// `rng`; the caller fills in `index` and `seed` on the returned recipe when
/// it derived `rng` from them.
pub fn build_pair<T: Scalar, R: Rng + ?Sized>(
    clean_id: &str,
    clean: &AudioClip<T>,
    noise_id: &str,
    noise: &AudioClip<T>,
    rng: &mut R,
    cfg: &PairGenConfig,
) -> Result<(JndPairRecipe, AudioClip<T>, AudioClip<T>), PairGenError> {
    cfg.validate()?;
    clean.validate()?;
    noise.validate()?;
    let window = sample_snr_window(rng, cfg);
    let (snr_a_db, snr_b_db) = sample_snr_pair(rng, window);
    let len = cfg.crop_len;
    let clean_offset = if clean.len() > len { rng.gen_range(0..=clean.len() - len) } else { 0 };
    let noise_offset = if noise.len() > len { rng.gen_range(0..=noise.len() - len) } else { 0 };

    let mut recipe = JndPairRecipe {
        index: 0,
        clean_id: clean_id.to_string(),
        noise_id: noise_id.to_string(),
        snr_a_db,
        snr_b_db,
        scale_m: 0.0,
        scale_n: 0.0,
        clean_offset,
        noise_offset,
        len,
        seed: 0,
    };
    let (clean_seg, noise_seg) = recipe_segments(clean, noise, &recipe);
    recipe.scale_m = noise_scale_for_snr(&clean_seg, &noise_seg, snr_a_db)?.as_f64();
    recipe.scale_n = noise_scale_for_snr(&clean_seg, &noise_seg, snr_b_db)?.as_f64();
    let (a, b) = realize_from_segments(&clean_seg, &noise_seg, &recipe);
    Ok((recipe, a, b))
}
