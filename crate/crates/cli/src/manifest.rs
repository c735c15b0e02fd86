//! JSONL manifests: one utterance per line. Relative paths resolve against
//! the directory holding the manifest.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use urgentkit_core::distortion::DistortionRecipe;

use crate::error::{io_err, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utt_id: String,
    pub clean_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rir_path: Option<PathBuf>,
    /// Filled in by `simulate` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<DistortionRecipe>,
    pub sample_rate: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ManifestEntry {
    pub fn new(utt_id: impl Into<String>, clean_path: impl Into<PathBuf>, sample_rate: u32) -> Self {
        Self {
            utt_id: utt_id.into(),
            clean_path: clean_path.into(),
            noise_path: None,
            rir_path: None,
            recipe: None,
            sample_rate,
            degraded_path: None,
            target_path: None,
            error: None,
        }
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.clean_path);
        for p in [&mut self.noise_path, &mut self.rir_path, &mut self.degraded_path, &mut self.target_path]
            .into_iter()
            .flatten()
        {
            join(p);
        }
    }

    /// Signal to enhance: the simulated degraded file, else the clean path.
    pub fn input_path(&self) -> &Path {
        self.degraded_path.as_deref().unwrap_or(&self.clean_path)
    }

    /// Reference for evaluation: the simulated target, else the clean path.
    pub fn reference_path(&self) -> &Path {
        self.target_path.as_deref().unwrap_or(&self.clean_path)
    }
}

/// Parses a manifest. Blank lines are skipped; ids must be unique and
/// rates positive.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| CliError::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let mut entry: ManifestEntry = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if entry.utt_id.is_empty() || entry.utt_id.contains(['/', '\\']) || entry.utt_id.starts_with('.') {
            return Err(bad(format!("utt_id {:?} is not a usable directory name", entry.utt_id)));
        }
        if !seen.insert(entry.utt_id.clone()) {
            return Err(bad(format!("duplicate utt_id {:?}", entry.utt_id)));
        }
        if entry.sample_rate == 0 {
            return Err(bad("sample_rate must be positive".into()));
        }
        entry.resolve(base);
        out.push(entry);
    }
    Ok(out)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut buf = Vec::new();
    for e in entries {
        serde_json::to_writer(&mut buf, e)?;
        buf.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))
}
