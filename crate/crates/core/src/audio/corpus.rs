use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::{load_audio, power_of, resample_to_16k, AudioClip, AudioError, DownmixPolicy};
use crate::Scalar;

/// Clips with mean power below this are treated as silent and skipped.
pub const MIN_CLIP_POWER: f64 = 1e-12;

/// Recursively lists `.wav` files under `root`, sorted for determinism.
pub fn scan_wav_files(root: &Path) -> Result<Vec<PathBuf>, AudioError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| AudioError::Io {
            path: root.display().to_string(),
            source: e.into_io_error().unwrap_or_else(|| std::io::Error::other("walk error")),
        })?;
        let is_wav = entry
            .path()
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("wav"));
        if entry.file_type().is_file() && is_wav {
            out.push(entry.into_path());
        }
    }
    out.sort();
    Ok(out)
}

/// A keyed collection of normalized (16 kHz, mono, non-silent) clips.
#[derive(Debug, Clone, Default)]
pub struct Corpus<T> {
    clips: BTreeMap<String, AudioClip<T>>,
    rejected: Vec<String>,
}

impl<T: Scalar> Corpus<T> {
    pub fn new() -> Self {
        Self { clips: BTreeMap::new(), rejected: Vec::new() }
    }

    /// Adds a clip, dropping it if it is silent. Returns whether it was kept.
    pub fn insert(&mut self, id: impl Into<String>, clip: AudioClip<T>) -> bool {
        let id = id.into();
        let usable = !clip.is_empty()
            && clip.validate().is_ok()
            && power_of(&clip.samples).as_f64() >= MIN_CLIP_POWER;
        if usable {
            self.clips.insert(id, clip);
        } else {
            log::warn!("dropping silent or invalid clip {id}");
            self.rejected.push(id);
        }
        usable
    }

    /// Loads every WAV under `root`, keyed by its path relative to `root`.
    pub fn load_dir(root: &Path) -> Result<Self, AudioError> {
        let mut corpus = Self::new();
        for path in scan_wav_files(root)? {
            let clip = resample_to_16k(&load_audio::<T>(&path, DownmixPolicy::Average)?)?;
            let id = path
                .strip_prefix(root)
                .unwrap_or(&path)
                .to_string_lossy()
                .replace('\\', "/");
            corpus.insert(id, clip);
        }
        if corpus.is_empty() {
            return Err(AudioError::EmptyCorpus(root.display().to_string()));
        }
        Ok(corpus)
    }

    pub fn get(&self, id: &str) -> Option<&AudioClip<T>> {
        self.clips.get(id)
    }

    /// Ids in sorted order.
    pub fn ids(&self) -> Vec<&str> {
        self.clips.keys().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn rejected(&self) -> &[String] {
        &self.rejected
    }
}
