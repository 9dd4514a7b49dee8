//! PESQ through an external program.

use std::process::Command;

use super::JndError;
use crate::audio::{save_audio, AudioClip};

/// Valid PESQ score interval.
pub const PESQ_RANGE: (f64, f64) = (-0.5, 4.5);

/// Scores a degraded signal against a reference.
pub trait PesqScorer: Send + Sync {
    fn score(&self, reference: &[f32], degraded: &[f32], sample_rate: u32) -> Result<f64, JndError>;
}

impl<F> PesqScorer for F
where
    F: Fn(&[f32], &[f32], u32) -> Result<f64, JndError> + Send + Sync,
{
    fn score(&self, reference: &[f32], degraded: &[f32], sample_rate: u32) -> Result<f64, JndError> {
        self(reference, degraded, sample_rate)
    }
}

/// Runs a command template once per pair.
///
/// The template is split on whitespace; the tokens `{ref}`, `{deg}` and
/// `{rate}` are replaced by the reference WAV path, the degraded WAV path and
/// the sample rate. The last number printed on stdout is the score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandPesq {
    pub template: String,
}

impl CommandPesq {
    pub fn new(template: impl Into<String>) -> Result<Self, JndError> {
        let template = template.into();
        if template.split_whitespace().next().is_none() {
            return Err(JndError::Extractor("empty command template".into()));
        }
        if !template.contains("{ref}") || !template.contains("{deg}") {
            return Err(JndError::Extractor("template must contain {ref} and {deg}".into()));
        }
        Ok(Self { template })
    }
}

fn parse_score(stdout: &str) -> Option<f64> {
    stdout
        .split_whitespace()
        .rev()
        .find_map(|tok| tok.trim_matches(|c: char| !(c.is_ascii_digit() || c == '.' || c == '-')).parse::<f64>().ok())
}

impl PesqScorer for CommandPesq {
    fn score(&self, reference: &[f32], degraded: &[f32], sample_rate: u32) -> Result<f64, JndError> {
        let dir = tempfile::tempdir()?;
        let ref_path = dir.path().join("ref.wav");
        let deg_path = dir.path().join("deg.wav");
        save_audio(&AudioClip::new(reference.to_vec(), sample_rate), &ref_path)?;
        save_audio(&AudioClip::new(degraded.to_vec(), sample_rate), &deg_path)?;
        let rate = sample_rate.to_string();
        let args: Vec<String> = self
            .template
            .split_whitespace()
            .map(|t| {
                t.replace("{ref}", &ref_path.to_string_lossy())
                    .replace("{deg}", &deg_path.to_string_lossy())
                    .replace("{rate}", &rate)
            })
            .collect();
        let out = Command::new(&args[0])
            .args(&args[1..])
            .output()
            .map_err(|e| JndError::Extractor(format!("cannot run {:?}: {e}", args[0])))?;
        if !out.status.success() {
            return Err(JndError::Extractor(format!(
                "{:?} exited with {}: {}",
                args[0],
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let score = parse_score(&stdout).ok_or_else(|| JndError::Extractor(format!("no score in output {:?}", stdout.trim())))?;
        if !(PESQ_RANGE.0..=PESQ_RANGE.1).contains(&score) {
            return Err(JndError::Extractor(format!("score {score} outside the PESQ range")));
        }
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_last_number() {
        assert_eq!(parse_score("PESQ score: 3.412\n"), Some(3.412));
        assert_eq!(parse_score("a 1.0 b 2.5"), Some(2.5));
        assert_eq!(parse_score("nothing"), None);
    }

    #[test]
    fn template_guards() {
        assert!(CommandPesq::new("  ").is_err());
        assert!(CommandPesq::new("pesq {ref}").is_err());
        assert!(CommandPesq::new("pesq {ref} {deg}").is_ok());
    }

    #[cfg(unix)]
    #[test]
    fn runs_a_command() {
        use std::os::unix::fs::PermissionsExt;
        let dir = tempfile::tempdir().unwrap();
        let script = dir.path().join("fake_pesq.sh");
        std::fs::write(&script, "#!/bin/sh\ntest -s \"$1\" && test -s \"$2\" && echo \"P.862 score: 3.9\"\n").unwrap();
        std::fs::set_permissions(&script, std::fs::Permissions::from_mode(0o755)).unwrap();
        let sig: Vec<f32> = (0..1600).map(|i| (i as f32 * 0.05).sin() * 0.3).collect();
        let cmd = CommandPesq::new(format!("{} {{ref}} {{deg}}", script.display())).unwrap();
        assert_eq!(cmd.score(&sig, &sig, 16_000).unwrap(), 3.9);
        let bad = CommandPesq::new("false {ref} {deg}").unwrap();
        assert!(matches!(bad.score(&sig, &sig, 16_000), Err(JndError::Extractor(_))));
    }
}
