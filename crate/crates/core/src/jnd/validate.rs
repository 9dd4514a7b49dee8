//! Labeled feature files and manifest-wide JND validation.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{extract_pair_feature, svm_predict, FeatureKind, JndError, JndLabel, PairFeature, PesqScorer, SvmModel};
use crate::audio::Corpus;
use crate::pairgen::{realize_pair, PairManifest};
use crate::Scalar;

/// Reads a delimited file whose header is the feature columns followed by `label`.
pub fn read_labeled_features(path: &Path) -> Result<(Vec<PairFeature>, Vec<JndLabel>), JndError> {
    let text = std::fs::read_to_string(path)?;
    let delimiter = if text.lines().next().is_some_and(|l| l.contains('\t')) { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    let Some((&"label", feature_cols)) = cols.split_last() else {
        return Err(JndError::Parse(format!("last column must be `label`, header is {cols:?}")));
    };
    let kind = FeatureKind::from_columns(feature_cols)
        .ok_or_else(|| JndError::Parse(format!("unrecognized feature columns {feature_cols:?}")))?;
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let values = feature_cols
            .iter()
            .enumerate()
            .map(|(j, _)| {
                record[j]
                    .parse::<f64>()
                    .map_err(|e| JndError::Parse(format!("row {}: {:?}: {e}", line + 2, &record[j])))
            })
            .collect::<Result<Vec<_>, _>>()?;
        features.push(PairFeature::new(kind, values)?);
        labels.push(record[feature_cols.len()].parse()?);
    }
    if features.is_empty() {
        return Err(JndError::Empty("labeled feature file"));
    }
    Ok((features, labels))
}

pub fn write_labeled_features(path: &Path, features: &[PairFeature], labels: &[JndLabel]) -> Result<(), JndError> {
    let kind = features.first().ok_or(JndError::Empty("feature list"))?.kind;
    if features.len() != labels.len() {
        return Err(JndError::LabelCount { features: features.len(), labels: labels.len() });
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = kind.columns().to_vec();
    header.push("label");
    w.write_record(&header)?;
    for (f, l) in features.iter().zip(labels) {
        let mut row: Vec<String> = f.values.iter().map(|v| v.to_string()).collect();
        row.push(l.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairVerdict {
    pub index: u64,
    pub clean_id: String,
    pub noise_id: String,
    pub snr_hi_db: f64,
    pub snr_lo_db: f64,
    pub features: Vec<f64>,
    pub margin: f64,
    pub within: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub feature_kind: FeatureKind,
    pub total: usize,
    pub within: usize,
    pub fraction_within: f64,
    /// Sorted by recipe index.
    pub rows: Vec<PairVerdict>,
}

impl ValidationReport {
    pub fn summary_line(&self) -> String {
        format!(
            "JND fraction_within={:.6} within={} total={} feature={}",
            self.fraction_within, self.within, self.total, self.feature_kind
        )
    }

    /// Summary as a `#` comment line, then one tab-separated row per pair.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# {}", self.summary_line())?;
        writeln!(w, "index\tclean_id\tnoise_id\tsnr_hi_db\tsnr_lo_db\tdelta_snr_db\t{}\tmargin\twithin", self.feature_kind.columns().join("\t"))?;
        for r in &self.rows {
            let feats: Vec<String> = r.features.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(
                w,
                "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{:.6}\t{}",
                r.index,
                r.clean_id,
                r.noise_id,
                r.snr_hi_db,
                r.snr_lo_db,
                r.snr_hi_db - r.snr_lo_db,
                feats.join("\t"),
                r.margin,
                r.within
            )?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        std::fs::write(path, buf)
    }
}

/// Classifies every pair of `manifest`, in parallel, with the higher-SNR
/// member as reference.
pub fn validate_manifest<T: Scalar>(
    model: &SvmModel,
    manifest: &PairManifest,
    clean: &Corpus<T>,
    noise: &Corpus<T>,
    pesq: Option<&dyn PesqScorer>,
) -> Result<ValidationReport, JndError> {
    if manifest.is_empty() {
        return Err(JndError::Empty("manifest"));
    }
    let kind = model.feature_kind;
    if kind.needs_pesq() && pesq.is_none() {
        return Err(JndError::MissingExtractor(kind));
    }
    let mut rows = manifest
        .recipes
        .par_iter()
        .map(|r| {
            let (a, b) = realize_pair(r, clean, noise)?;
            let (hi, lo, snr_hi, snr_lo) =
                if r.snr_a_db >= r.snr_b_db { (a, b, r.snr_a_db, r.snr_b_db) } else { (b, a, r.snr_b_db, r.snr_a_db) };
            let feature = extract_pair_feature(&hi, &lo, kind, pesq)?;
            let (within, margin) = svm_predict(model, &feature)?;
            Ok(PairVerdict {
                index: r.index,
                clean_id: r.clean_id.clone(),
                noise_id: r.noise_id.clone(),
                snr_hi_db: snr_hi,
                snr_lo_db: snr_lo,
                features: feature.values,
                margin,
                within,
            })
        })
        .collect::<Result<Vec<_>, JndError>>()?;
    rows.sort_by_key(|r| r.index);
    let within = rows.iter().filter(|r| r.within).count();
    Ok(ValidationReport { feature_kind: kind, total: rows.len(), within, fraction_within: within as f64 / rows.len() as f64, rows })
}
