use super::{AudioClip, AudioError, TARGET_SAMPLE_RATE};
use crate::Scalar;

/// Zero crossings of the sinc kernel kept on each side of the centre tap.
const ZERO_CROSSINGS: f64 = 16.0;
const KAISER_BETA: f64 = 8.6;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..64 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Polyphase windowed-sinc filter bank for a rational rate change `up/down`.
struct PolyphaseBank {
    up: u64,
    down: u64,
    /// taps are indexed relative to the integer input position: j in [1-half, half]
    half: i64,
    phases: Vec<Vec<f64>>,
}

impl PolyphaseBank {
    fn new(from: u32, to: u32) -> Self {
        let g = gcd(u64::from(from), u64::from(to));
        let up = u64::from(to) / g;
        let down = u64::from(from) / g;
        let cutoff = (up as f64 / down as f64).min(1.0);
        let width = ZERO_CROSSINGS / cutoff;
        let half = width.ceil() as i64;
        let norm = bessel_i0(KAISER_BETA);
        let phases = (0..up)
            .map(|phase| {
                let frac = phase as f64 / up as f64;
                let mut taps: Vec<f64> = ((1 - half)..=half)
                    .map(|j| {
                        let tau = frac - j as f64;
                        let r = tau / width;
                        if r.abs() >= 1.0 {
                            0.0
                        } else {
                            cutoff * sinc(cutoff * tau) * bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / norm
                        }
                    })
                    .collect();
                let sum: f64 = taps.iter().sum();
                taps.iter_mut().for_each(|t| *t /= sum);
                taps
            })
            .collect();
        Self { up, down, half, phases }
    }

    fn apply(&self, input: &[f64]) -> Vec<f64> {
        let out_len = ((input.len() as u128 * self.up as u128 + self.down as u128 / 2) / self.down as u128) as usize;
        let n_in = input.len() as i64;
        (0..out_len as u64)
            .map(|n| {
                let pos = n * self.down;
                let base = (pos / self.up) as i64;
                let taps = &self.phases[(pos % self.up) as usize];
                let mut acc = 0.0;
                for (m, &h) in taps.iter().enumerate() {
                    let i = base + (1 - self.half) + m as i64;
                    if (0..n_in).contains(&i) {
                        acc += h * input[i as usize];
                    }
                }
                acc
            })
            .collect()
    }
}

/// Resamples to 16 kHz with a Kaiser-windowed sinc polyphase filter.
///
/// Clips already at 16 kHz are returned unchanged. The output has
/// `round(len · 16000 / rate)` samples.
pub fn resample_to_16k<T: Scalar>(clip: &AudioClip<T>) -> Result<AudioClip<T>, AudioError> {
    if clip.sample_rate < 8000 {
        return Err(AudioError::RateTooLow(clip.sample_rate));
    }
    if clip.sample_rate == TARGET_SAMPLE_RATE {
        return Ok(clip.clone());
    }
    if clip.is_empty() {
        return Err(AudioError::Empty);
    }
    let bank = PolyphaseBank::new(clip.sample_rate, TARGET_SAMPLE_RATE);
    let input: Vec<f64> = clip.samples.iter().map(|s| s.as_f64()).collect();
    let samples = bank.apply(&input).into_iter().map(T::of).collect();
    Ok(AudioClip::new(samples, TARGET_SAMPLE_RATE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, rate: u32, secs: f64) -> AudioClip<f64> {
        let n = (f64::from(rate) * secs).round() as usize;
        AudioClip::new((0..n).map(|t| (2.0 * PI * freq * t as f64 / f64::from(rate)).sin()).collect(), rate)
    }

    fn correlation(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn identity_at_target_rate() {
        let clip = sine(440.0, 16_000, 0.1);
        assert_eq!(resample_to_16k(&clip).unwrap(), clip);
    }

    #[test]
    fn length_arithmetic() {
        for rate in [48_000u32, 44_100, 22_050, 8_000, 32_000] {
            let clip = sine(300.0, rate, 1.0);
            let out = resample_to_16k(&clip).unwrap();
            assert_eq!(out.sample_rate, 16_000);
            assert!((out.len() as i64 - 16_000).abs() <= 1, "{rate}: {}", out.len());
        }
    }

    #[test]
    fn sine_matches_analytic_reference() {
        let out = resample_to_16k(&sine(1000.0, 48_000, 1.0)).unwrap();
        let reference = sine(1000.0, 16_000, 1.0);
        // skip the filter's edge transients
        let r = correlation(&out.samples[200..15_800], &reference.samples[200..15_800]);
        assert!(r > 0.999, "correlation {r}");
        let up = resample_to_16k(&sine(1000.0, 8_000, 1.0)).unwrap();
        let r = correlation(&up.samples[200..15_800], &reference.samples[200..15_800]);
        assert!(r > 0.999, "correlation {r}");
    }

    #[test]
    fn content_above_new_nyquist_is_suppressed() {
        // 12 kHz tone at 48 kHz cannot be represented at 16 kHz
        let out = resample_to_16k(&sine(12_000.0, 48_000, 0.5)).unwrap();
        let p: f64 = out.samples[200..7800].iter().map(|s| s * s).sum::<f64>() / 7600.0;
        assert!(p < 1e-4, "aliased power {p}");
    }

    #[test]
    fn low_rates_rejected() {
        let clip = AudioClip::new(vec![0.0f32; 10], 4000);
        assert!(matches!(resample_to_16k(&clip), Err(AudioError::RateTooLow(4000))));
    }
}
