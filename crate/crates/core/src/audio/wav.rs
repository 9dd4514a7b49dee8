use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::{AudioClip, AudioError};
use crate::Scalar;

const I16_SCALE: f64 = 32768.0;

/// How interleaved multichannel files collapse into a mono clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DownmixPolicy {
    /// Average all channels.
    #[default]
    Average,
    /// Keep channel 0 only.
    FirstChannel,
    /// Refuse anything but mono input.
    Reject,
}

/// Reads a 16-bit integer or 32-bit float PCM WAV file.
///
/// The original sample rate is kept; integer samples are scaled by 1/32768 so
/// that every value lies in [-1, 1).
pub fn load_audio<T: Scalar>(path: &Path, downmix: DownmixPolicy) -> Result<AudioClip<T>, AudioError> {
    let display = path.display().to_string();
    let reader = WavReader::open(path).map_err(|source| AudioError::Unreadable {
        path: display.clone(),
        source,
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    if channels > 1 && downmix == DownmixPolicy::Reject {
        return Err(AudioError::Multichannel { path: display, channels: spec.channels });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| f64::from(v) / I16_SCALE))
            .collect::<Result<_, _>>(),
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>(),
        (fmt, bits) => {
            return Err(AudioError::UnsupportedEncoding {
                path: display,
                detail: format!("{bits}-bit {fmt:?}"),
            })
        }
    }
    .map_err(|source| AudioError::Unreadable { path: display.clone(), source })?;

    let samples = match downmix {
        _ if channels == 1 => interleaved.into_iter().map(T::of).collect(),
        DownmixPolicy::FirstChannel => interleaved.chunks(channels).map(|f| T::of(f[0])).collect(),
        _ => interleaved
            .chunks(channels)
            .map(|f| T::of(f.iter().sum::<f64>() / f.len() as f64))
            .collect(),
    };
    Ok(AudioClip::new(samples, spec.sample_rate))
}

/// Writes a clip as mono 16-bit PCM. Samples outside [-1, 1] saturate at
/// full scale and a warning is logged.
pub fn save_audio<T: Scalar>(clip: &AudioClip<T>, path: &Path) -> Result<(), AudioError> {
    let display = path.display().to_string();
    let spec = WavSpec {
        channels: 1,
        sample_rate: clip.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let unwritable = |source| AudioError::Unwritable { path: display.clone(), source };
    let mut writer = WavWriter::create(path, spec).map_err(unwritable)?;
    let mut clipped = 0usize;
    for &s in &clip.samples {
        let v = (s.as_f64() * I16_SCALE).round();
        if !(f64::from(i16::MIN)..=f64::from(i16::MAX)).contains(&v) {
            clipped += 1;
        }
        let q = v.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
        writer.write_sample(q).map_err(unwritable)?;
    }
    writer.finalize().map_err(unwritable)?;
    if clipped > 0 {
        log::warn!("{display}: {clipped} samples saturated at full scale");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use rand::Rng;

    fn write_i16(path: &Path, channels: u16, samples: &[i16]) {
        let spec = WavSpec { channels, sample_rate: 16_000, bits_per_sample: 16, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
    }

    #[test]
    fn silence_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("silence.wav");
        write_i16(&p, 1, &vec![0; 16_000]);
        let clip: AudioClip<f32> = load_audio(&p, DownmixPolicy::Reject).unwrap();
        assert_eq!(clip.len(), 16_000);
        assert_eq!(clip.sample_rate, 16_000);
        assert!(clip.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn full_scale_square_stays_in_range() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("square.wav");
        let square: Vec<i16> = (0..800).map(|i| if (i / 20) % 2 == 0 { i16::MAX } else { i16::MIN }).collect();
        write_i16(&p, 1, &square);
        let clip: AudioClip<f64> = load_audio(&p, DownmixPolicy::Average).unwrap();
        assert!(clip.samples.iter().all(|s| (-1.0..=1.0).contains(s)));
        assert_eq!(clip.samples[20], -1.0);
    }

    #[test]
    fn stereo_downmix_policies() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("stereo.wav");
        write_i16(&p, 2, &[16384, 0, -16384, 16384]);
        let avg: AudioClip<f64> = load_audio(&p, DownmixPolicy::Average).unwrap();
        assert_eq!(avg.samples, vec![0.25, 0.0]);
        let first: AudioClip<f64> = load_audio(&p, DownmixPolicy::FirstChannel).unwrap();
        assert_eq!(first.samples, vec![0.5, -0.5]);
        assert!(matches!(
            load_audio::<f64>(&p, DownmixPolicy::Reject),
            Err(AudioError::Multichannel { channels: 2, .. })
        ));
    }

    #[test]
    fn float_wav_is_read_and_unsupported_depth_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("float.wav");
        let spec = WavSpec { channels: 1, sample_rate: 22_050, bits_per_sample: 32, sample_format: SampleFormat::Float };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for v in [0.25f32, -0.75, 1.5] {
            w.write_sample(v).unwrap();
        }
        w.finalize().unwrap();
        let clip: AudioClip<f32> = load_audio(&p, DownmixPolicy::Reject).unwrap();
        assert_eq!(clip.samples, vec![0.25, -0.75, 1.5]);
        assert_eq!(clip.sample_rate, 22_050);

        let q = dir.path().join("pcm24.wav");
        let spec = WavSpec { channels: 1, sample_rate: 16_000, bits_per_sample: 24, sample_format: SampleFormat::Int };
        let mut w = WavWriter::create(&q, spec).unwrap();
        w.write_sample(1000i32).unwrap();
        w.finalize().unwrap();
        assert!(matches!(
            load_audio::<f32>(&q, DownmixPolicy::Reject),
            Err(AudioError::UnsupportedEncoding { .. })
        ));
        let missing = dir.path().join("missing.wav");
        assert!(matches!(load_audio::<f32>(&missing, DownmixPolicy::Reject), Err(AudioError::Unreadable { .. })));
    }

    #[test]
    fn roundtrip_error_is_within_quantization_bound() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("rt.wav");
        let mut rng = rng_for(11, &[]);
        let mut samples: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        samples.extend([1.0, -1.0]);
        let clip = AudioClip::new(samples, 16_000);
        save_audio(&clip, &p).unwrap();
        let back: AudioClip<f64> = load_audio(&p, DownmixPolicy::Reject).unwrap();
        assert_eq!(back.len(), clip.len());
        assert_eq!(back.sample_rate, clip.sample_rate);
        let max_err = clip.samples.iter().zip(&back.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(max_err <= 2.0 / 65536.0, "max error {max_err}");
        // second generation is exact: the file already holds quantized values
        let p2 = dir.path().join("rt2.wav");
        save_audio(&back, &p2).unwrap();
        let again: AudioClip<f64> = load_audio(&p2, DownmixPolicy::Reject).unwrap();
        assert_eq!(again.samples, back.samples);
    }

    #[test]
    fn out_of_range_samples_saturate() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hot.wav");
        save_audio(&AudioClip::new(vec![2.0f32, -3.0, 0.5], 16_000), &p).unwrap();
        let back: AudioClip<f32> = load_audio(&p, DownmixPolicy::Reject).unwrap();
        assert_eq!(back.samples, vec![32767.0 / 32768.0, -1.0, 0.5]);
    }

    #[test]
    fn unwritable_path_errors() {
        let clip = AudioClip::new(vec![0.0f32; 4], 16_000);
        let err = save_audio(&clip, Path::new("/nonexistent-dir/x.wav")).unwrap_err();
        assert!(matches!(err, AudioError::Unwritable { .. }));
    }
}
