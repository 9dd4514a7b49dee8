use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
}

/// Per-step losses of one run. Wall-clock seconds are kept apart from the
/// records so that the main file is reproducible byte for byte.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CurveLog {
    pub records: Vec<CurveRecord>,
    pub seconds: Vec<f64>,
}

impl CurveLog {
    pub fn push(&mut self, record: CurveRecord, seconds: f64) {
        debug_assert!(self.records.last().is_none_or(|r| r.step < record.step));
        self.records.push(record);
        self.seconds.push(seconds);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    /// Appends a continuation whose steps come strictly after ours.
    pub fn extend(&mut self, other: &CurveLog) -> Result<(), TrainError> {
        if let (Some(a), Some(b)) = (self.records.last(), other.records.first()) {
            if b.step <= a.step {
                return Err(TrainError::Data(format!("curve continuation starts at step {} after {}", b.step, a.step)));
            }
        }
        self.records.extend_from_slice(&other.records);
        self.seconds.extend_from_slice(&other.seconds);
        Ok(())
    }

    /// Mean loss of each epoch, in epoch order.
    pub fn epoch_means(&self) -> Vec<(u64, f64)> {
        let mut out: Vec<(u64, f64, usize)> = Vec::new();
        for r in &self.records {
            match out.last_mut() {
                Some(last) if last.0 == r.epoch => {
                    last.1 += r.loss;
                    last.2 += 1;
                }
                _ => out.push((r.epoch, r.loss, 1)),
            }
        }
        out.into_iter().map(|(e, s, n)| (e, s / n as f64)).collect()
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("step\tepoch\tloss\n");
        for r in &self.records {
            s.push_str(&format!("{}\t{}\t{}\n", r.step, r.epoch, r.loss));
        }
        s
    }

    pub fn timing_path(path: &Path) -> PathBuf {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        path.with_file_name(format!("{stem}.timing.tsv"))
    }

    /// Writes the records to `path` and the wall-clock column to the timing sidecar.
    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_tsv())?;
        let mut f = std::io::BufWriter::new(std::fs::File::create(Self::timing_path(path))?);
        writeln!(f, "step\tseconds")?;
        for (r, s) in self.records.iter().zip(&self.seconds) {
            writeln!(f, "{}\t{:.6}", r.step, s)?;
        }
        f.flush()?;
        Ok(())
    }

    /// Reads the records; the timing sidecar is optional.
    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("step\tepoch\tloss") {
            return Err(TrainError::Data(format!("{} is not a curve file", path.display())));
        }
        let mut log = CurveLog::default();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let bad = || TrainError::Data(format!("{}:{}: malformed row {line:?}", path.display(), i + 2));
            let mut it = line.split('\t');
            let step = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let epoch = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            let loss = it.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
            if log.records.last().is_some_and(|r| r.step >= step) {
                return Err(bad());
            }
            log.records.push(CurveRecord { step, epoch, loss });
        }
        let timing = Self::timing_path(path);
        log.seconds = vec![f64::NAN; log.records.len()];
        if let Ok(t) = std::fs::read_to_string(&timing) {
            for (slot, line) in log.seconds.iter_mut().zip(t.lines().skip(1)) {
                *slot = line.split('\t').nth(1).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
            }
        }
        Ok(log)
    }
}

/// Trailing moving average over up to `window` values.
pub fn smooth(values: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(values.len());
    let mut sum = 0.0;
    for i in 0..values.len() {
        sum += values[i];
        if i >= window {
            sum -= values[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// First epoch whose smoothed loss improved by less than `min_rel_gain`
/// relative to `lookback` epochs earlier, or the last epoch if none did.
///
/// `epoch_losses` holds one mean loss per epoch; the return value indexes it.
pub fn select_checkpoint_epoch(epoch_losses: &[f64], lookback: usize, min_rel_gain: f64) -> Option<usize> {
    if epoch_losses.is_empty() {
        return None;
    }
    let s = smooth(epoch_losses, lookback);
    (lookback..s.len())
        .find(|&e| (s[e - lookback] - s[e]) / s[e - lookback].abs().max(f64::MIN_POSITIVE) < min_rel_gain)
        .or(Some(s.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log(losses: &[f64]) -> CurveLog {
        let mut l = CurveLog::default();
        for (i, &v) in losses.iter().enumerate() {
            l.push(CurveRecord { step: i as u64 + 1, epoch: i as u64 / 2, loss: v }, i as f64 * 0.1);
        }
        l
    }

    #[test]
    fn roundtrip_and_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("curve.tsv");
        let l = log(&[2.7, 2.5, 0.1 + 0.2, 1e-9]);
        l.save(&p).unwrap();
        let back = CurveLog::load(&p).unwrap();
        assert_eq!(back.records, l.records);
        assert!(dir.path().join("curve.timing.tsv").exists());
        assert!(!std::fs::read_to_string(&p).unwrap().contains("seconds"));
        assert_eq!(l.epoch_means(), vec![(0, 2.6), (1, (0.1 + 0.2 + 1e-9) / 2.0)]);
    }

    #[test]
    fn smoothing_and_selection() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
        let mut losses = vec![10.0, 8.0, 6.0, 5.0, 4.5, 4.4, 4.39];
        losses.extend([4.38; 12]);
        let e = select_checkpoint_epoch(&losses, 5, 0.01).unwrap();
        let s = smooth(&losses, 5);
        assert!(e < losses.len() - 1);
        assert!((s[e - 5] - s[e]) / s[e - 5] < 0.01);
        assert!((5..e).all(|k| (s[k - 5] - s[k]) / s[k - 5] >= 0.01));
        assert_eq!(select_checkpoint_epoch(&[3.0, 2.0], 5, 0.01), Some(1));
        assert_eq!(select_checkpoint_epoch(&[], 5, 0.01), None);
    }

    #[test]
    fn extend_requires_increasing_steps() {
        let mut a = log(&[1.0, 2.0]);
        let b = log(&[3.0]);
        assert!(a.extend(&b).is_err());
    }
}
