//! Layered run configuration: built-in defaults, then a flat TOML file, then
//! data-root environment variables, then command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Serialize};

use jsqa_core::jnd::FeatureKind;
use jsqa_core::model::{EncoderConfig, ModelConfig};

/// Environment variables that may override data roots, with their keys.
pub const ENV_ROOTS: [(&str, &str); 3] = [("JSQA_CLEAN_DIR", "clean_dir"), ("JSQA_NOISE_DIR", "noise_dir"), ("JSQA_MOS_DIR", "mos_dir")];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the pool pick.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Use built-in synthesized corpora instead of audio directories.
    pub synthetic: bool,
    pub clean_dir: Option<PathBuf>,
    pub noise_dir: Option<PathBuf>,
    pub mos_dir: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,

    pub pairs: usize,
    pub snr_min: f64,
    pub snr_max: f64,
    pub window_db: f64,
    pub crop_len: usize,
    pub realize: bool,

    /// `default`, `base16` or `toy`.
    pub model: String,
    pub projection_head: bool,
    pub batch_pairs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub pretrain_epochs: u64,
    pub finetune_epochs: u64,
    pub steps: Option<u64>,
    pub checkpoint_every: u64,
    pub freeze_encoder: bool,
    pub split: String,
    pub synthetic_mos: usize,

    pub feature: FeatureKind,
    pub pesq_cmd: Option<String>,
    pub svm_model: Option<PathBuf>,
    pub jnd_features: Option<PathBuf>,
    pub svm_c: f64,
    pub svm_epochs: usize,

    pub curve: Option<PathBuf>,
    pub curve_b: Option<PathBuf>,
    pub hist_bin_db: f64,
    pub render: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out_dir: PathBuf::from("out"),
            synthetic: false,
            clean_dir: None,
            noise_dir: None,
            mos_dir: None,
            labels: None,
            manifest: None,
            checkpoint: None,
            pairs: 1000,
            snr_min: -3.0,
            snr_max: 9.0,
            window_db: 6.0,
            crop_len: 32_000,
            realize: false,
            model: "default".into(),
            projection_head: false,
            batch_pairs: 8,
            batch_size: 8,
            learning_rate: 1e-3,
            pretrain_epochs: 45,
            finetune_epochs: 250,
            steps: None,
            checkpoint_every: 1,
            freeze_encoder: false,
            split: "test".into(),
            synthetic_mos: 64,
            feature: FeatureKind::Pesq,
            pesq_cmd: None,
            svm_model: None,
            jnd_features: None,
            svm_c: 1.0,
            svm_epochs: 200,
            curve: None,
            curve_b: None,
            hist_bin_db: 0.25,
            render: false,
        }
    }
}

/// Flags accepted by every subcommand; each overrides the key of the same name.
#[derive(Debug, Clone, Default, Args, Serialize)]
pub struct Overrides {
    /// Flat TOML file with any of the keys below.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[arg(long = "out", global = true)]
    #[serde(rename = "out_dir", skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Use built-in synthesized corpora and MOS data.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub synthetic: bool,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mos_dir: Option<PathBuf>,
    /// Label table with `path,mos` rows.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    /// Global SNR range in dB, e.g. `--snr-range -3 9`.
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"], allow_hyphen_values = true, global = true)]
    #[serde(skip)]
    pub snr_range: Option<Vec<f64>>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window_db: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crop_len: Option<usize>,
    /// Also write every realized pair as WAV files.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub realize: bool,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[arg(long, global = true, conflicts_with = "no_projection_head")]
    #[serde(skip)]
    pub projection_head: bool,
    #[arg(long, global = true)]
    #[serde(skip)]
    pub no_projection_head: bool,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_pairs: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pretrain_epochs: Option<u64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub finetune_epochs: Option<u64>,
    /// Stop after this many optimizer steps.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<u64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint_every: Option<u64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub freeze_encoder: bool,
    /// Which part of the 80/10/10 split to evaluate: train, val, test or all.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic_mos: Option<usize>,
    /// JND feature: pesq, si_sdr or both.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature: Option<String>,
    /// PESQ command template with `{ref}`, `{deg}` and optionally `{rate}`.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pesq_cmd: Option<String>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svm_model: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jnd_features: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svm_c: Option<f64>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub svm_epochs: Option<usize>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve: Option<PathBuf>,
    /// Second curve for a two-column overlay.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub curve_b: Option<PathBuf>,
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hist_bin_db: Option<f64>,
    /// Also draw SVG images next to the data files.
    #[arg(long, global = true)]
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub render: bool,
}

fn overlay(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        base.insert(k, v);
    }
}

impl RunConfig {
    /// Resolves defaults ← file ← environment ← flags, rejecting unknown keys.
    pub fn resolve(flags: &Overrides, env: impl Fn(&str) -> Option<String>) -> anyhow::Result<Self> {
        let mut table = toml::Table::try_from(RunConfig::default()).context("serializing defaults")?;
        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            let file: toml::Table = text.parse().with_context(|| format!("parsing config {}", path.display()))?;
            if let Some((k, _)) = file.iter().find(|(_, v)| v.is_table()) {
                bail!("config {} must be flat, but `{k}` is a table", path.display());
            }
            overlay(&mut table, file);
        }
        for (var, key) in ENV_ROOTS {
            if let Some(v) = env(var).filter(|v| !v.is_empty()) {
                table.insert(key.into(), toml::Value::String(v));
            }
        }
        overlay(&mut table, toml::Table::try_from(flags).context("collecting flags")?);
        if let Some(r) = &flags.snr_range {
            table.insert("snr_min".into(), toml::Value::Float(r[0]));
            table.insert("snr_max".into(), toml::Value::Float(r[1]));
        }
        if flags.projection_head || flags.no_projection_head {
            table.insert("projection_head".into(), toml::Value::Boolean(flags.projection_head));
        }
        let cfg: RunConfig = table.try_into().context("invalid configuration")?;
        cfg.model_config()?;
        Ok(cfg)
    }

    pub fn model_config(&self) -> anyhow::Result<ModelConfig> {
        let encoder = match self.model.as_str() {
            "default" => EncoderConfig::default(),
            "base16" => EncoderConfig::base16(),
            "toy" => EncoderConfig::toy(),
            "" => bail!("no model configuration given (use default, base16 or toy)"),
            other => bail!("unknown model {other:?} (use default, base16 or toy)"),
        };
        Ok(ModelConfig::from_encoder(encoder).with_projection(self.projection_head))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    /// Writes the resolved configuration into `dir`.
    pub fn record(&self, dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        std::fs::write(dir.join("run_config.toml"), self.to_toml()).context("writing run_config.toml")
    }
}
