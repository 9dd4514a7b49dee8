//! Small synthetic corpora for smoke runs and tests: harmonic "voiced"
//! signals with a syllable-rate envelope standing in for speech, and
//! coloured noise standing in for background recordings.

use std::f64::consts::PI;

use rand::Rng;

use crate::audio::{AudioClip, Corpus, TARGET_SAMPLE_RATE};
use crate::pairgen::mix_at_snr;
use crate::seed::rng_for;
use crate::Scalar;

const SYNTH_STREAM: u64 = 0x5359_4e54;

/// A voiced harmonic signal with a ~4 Hz amplitude envelope.
pub fn speech_like<T: Scalar>(len: usize, seed: u64) -> AudioClip<T> {
    let mut rng = rng_for(seed, &[SYNTH_STREAM, 0]);
    let f0 = rng.gen_range(90.0..260.0);
    let vibrato = rng.gen_range(0.5..3.0);
    let syllable_rate = rng.gen_range(3.0..6.0);
    let harmonics: Vec<(f64, f64)> = (1..=12)
        .map(|k| (k as f64, rng.gen_range(0.2..1.0) / k as f64))
        .collect();
    let phase0 = rng.gen_range(0.0..2.0 * PI);
    let fs = f64::from(TARGET_SAMPLE_RATE);
    let samples = (0..len)
        .map(|t| {
            let time = t as f64 / fs;
            let f = f0 * (1.0 + 0.03 * (2.0 * PI * vibrato * time).sin());
            let env = 0.5 * (1.0 - (2.0 * PI * syllable_rate * time + phase0).cos());
            let s: f64 = harmonics
                .iter()
                .filter(|(k, _)| k * f < fs / 2.0)
                .map(|(k, a)| a * (2.0 * PI * k * f * time).sin())
                .sum();
            T::of(0.25 * env * s)
        })
        .collect();
    AudioClip::new(samples, TARGET_SAMPLE_RATE)
}

/// First-order low-passed white noise with a random colour.
pub fn coloured_noise<T: Scalar>(len: usize, seed: u64) -> AudioClip<T> {
    let mut rng = rng_for(seed, &[SYNTH_STREAM, 1]);
    let pole: f64 = rng.gen_range(0.0..0.95);
    let mut state = 0.0;
    let samples = (0..len)
        .map(|_| {
            state = pole * state + (1.0 - pole) * rng.gen_range(-1.0..1.0);
            T::of(0.3 * state)
        })
        .collect();
    AudioClip::new(samples, TARGET_SAMPLE_RATE)
}

/// `(clean, noise)` corpora with ids `clean_000`, `noise_000`, ...
pub fn toy_corpora<T: Scalar>(n_clean: usize, n_noise: usize, len: usize, seed: u64) -> (Corpus<T>, Corpus<T>) {
    let mut clean = Corpus::new();
    for i in 0..n_clean {
        clean.insert(format!("clean_{i:03}"), speech_like(len, seed.wrapping_add(i as u64)));
    }
    let mut noise = Corpus::new();
    for i in 0..n_noise {
        noise.insert(format!("noise_{i:03}"), coloured_noise(len, seed.wrapping_add(1000 + i as u64)));
    }
    (clean, noise)
}

/// Degraded clips with a MOS-like label that rises smoothly with SNR.
///
/// Returns `(id, clip, mos)` triples; SNRs span -5..25 dB.
pub fn toy_mos_set<T: Scalar>(n: usize, len: usize, seed: u64) -> Vec<(String, AudioClip<T>, f64)> {
    (0..n)
        .map(|i| {
            let mut rng = rng_for(seed, &[SYNTH_STREAM, 2, i as u64]);
            let snr = rng.gen_range(-5.0..25.0);
            let clean = speech_like::<T>(len, seed.wrapping_add(10_000 + i as u64));
            let noise = coloured_noise::<T>(len, seed.wrapping_add(20_000 + i as u64));
            let clip = mix_at_snr(&clean, &noise, snr).expect("synthetic signals have power");
            let mos = 1.0 + 4.0 / (1.0 + (-(snr - 8.0) / 5.0).exp());
            (format!("mos_{i:03}.wav"), clip, mos)
        })
        .collect()
}
