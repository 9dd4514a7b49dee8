use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{build_pair, realize_from_segments, recipe_segments, JndPairRecipe, PairGenConfig, PairGenError};
use crate::audio::{AudioClip, Corpus};
use crate::seed::{derive_seed, rng_for, stream};
use crate::Scalar;

pub const MANIFEST_FORMAT: &str = "jsqa-pair-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub config: PairGenConfig,
}

/// Header line followed by one JSON recipe per line.
#[derive(Debug, Clone, PartialEq)]
pub struct PairManifest {
    pub header: ManifestHeader,
    pub recipes: Vec<JndPairRecipe>,
}

impl PairManifest {
    pub fn new(config: PairGenConfig, recipes: Vec<JndPairRecipe>) -> Self {
        Self {
            header: ManifestHeader { format: MANIFEST_FORMAT.to_string(), version: MANIFEST_VERSION, config },
            recipes,
        }
    }

    pub fn config(&self) -> &PairGenConfig {
        &self.header.config
    }

    pub fn len(&self) -> usize {
        self.recipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipes.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), PairGenError> {
        let line = |v: serde_json::Result<String>| v.map_err(|e| PairGenError::Io(e.into()));
        writeln!(w, "{}", line(serde_json::to_string(&self.header))?)?;
        for r in &self.recipes {
            writeln!(w, "{}", line(serde_json::to_string(r))?)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save(&self, path: &Path) -> Result<(), PairGenError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, PairGenError> {
        let mut lines = r.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines.next().ok_or(PairGenError::Parse { line: 1, msg: "missing header".into() })?;
        let header: ManifestHeader =
            serde_json::from_str(&first?).map_err(|e| PairGenError::Parse { line: 1, msg: e.to_string() })?;
        if header.format != MANIFEST_FORMAT || header.version != MANIFEST_VERSION {
            return Err(PairGenError::Version {
                found: format!("{} v{}", header.format, header.version),
                expected: format!("{MANIFEST_FORMAT} v{MANIFEST_VERSION}"),
            });
        }
        let mut recipes = Vec::new();
        for (i, line) in lines {
            let recipe = serde_json::from_str(&line?).map_err(|e| PairGenError::Parse { line: i + 1, msg: e.to_string() })?;
            recipes.push(recipe);
        }
        Ok(Self { header, recipes })
    }

    pub fn load(path: &Path) -> Result<Self, PairGenError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    /// Mean, min and max of |ΔSNR| over all recipes.
    pub fn delta_snr_summary(&self) -> Option<(f64, f64, f64)> {
        if self.recipes.is_empty() {
            return None;
        }
        let deltas: Vec<f64> = self.recipes.iter().map(JndPairRecipe::delta_snr_db).collect();
        let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
        let min = deltas.iter().copied().fold(f64::INFINITY, f64::min);
        let max = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((mean, min, max))
    }
}

/// Draws `cfg.pair_count` recipes. Recipe `i` depends only on `(cfg.seed, i)`
/// and the sorted corpus ids, so any recipe can be regenerated on its own.
pub fn build_manifest<T: Scalar>(
    clean: &Corpus<T>,
    noise: &Corpus<T>,
    cfg: &PairGenConfig,
) -> Result<PairManifest, PairGenError> {
    cfg.validate()?;
    if clean.is_empty() {
        return Err(PairGenError::EmptyCorpus("clean"));
    }
    if noise.is_empty() {
        return Err(PairGenError::EmptyCorpus("noise"));
    }
    let clean_ids = clean.ids();
    let noise_ids = noise.ids();
    let mut recipes = Vec::with_capacity(cfg.pair_count);
    for index in 0..cfg.pair_count as u64 {
        let seed = derive_seed(cfg.seed, &[stream::PAIR, index]);
        let mut rng = rng_for(seed, &[]);
        let clean_id = clean_ids[rng.gen_range(0..clean_ids.len())];
        let noise_id = noise_ids[rng.gen_range(0..noise_ids.len())];
        let clean_clip = clean.get(clean_id).expect("id from corpus");
        let noise_clip = noise.get(noise_id).expect("id from corpus");
        let (mut recipe, _, _) = build_pair(clean_id, clean_clip, noise_id, noise_clip, &mut rng, cfg)?;
        recipe.index = index;
        recipe.seed = seed;
        recipes.push(recipe);
    }
    Ok(PairManifest::new(cfg.clone(), recipes))
}

/// Regenerates both clips of a recipe from the corpora.
pub fn realize_pair<T: Scalar>(
    recipe: &JndPairRecipe,
    clean: &Corpus<T>,
    noise: &Corpus<T>,
) -> Result<(AudioClip<T>, AudioClip<T>), PairGenError> {
    let c = clean.get(&recipe.clean_id).ok_or_else(|| PairGenError::UnknownClip(recipe.clean_id.clone()))?;
    let n = noise.get(&recipe.noise_id).ok_or_else(|| PairGenError::UnknownClip(recipe.noise_id.clone()))?;
    let (cs, ns) = recipe_segments(c, n, recipe);
    Ok(realize_from_segments(&cs, &ns, recipe))
}
