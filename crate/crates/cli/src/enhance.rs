use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use urgentkit_core::audio::{write_wav, Encoding};
use urgentkit_core::pipeline::{run_pipeline, PipelineStages, StageId};
use urgentkit_core::seed::utterance_seed;

use crate::config::RunConfig;
use crate::error::{io_err, CliError, Outcome, Result};
use crate::manifest::{read_manifest, ManifestEntry};
use crate::simulate::load_at;
use crate::{par_map, TOOL_VERSION};

pub const RUN_RECORD: &str = "run.json";
/// Output file stems, in the order they are written.
pub const OUTPUT_STEMS: [&str; 4] = ["s1", "s2", "s3", "blend"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UttStatus {
    pub utt_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Sidecar describing how an enhancement run was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool_version: String,
    pub config_hash: String,
    /// Effective configuration: shift offsets spelled out.
    pub config: RunConfig,
    pub blend: String,
    pub codebook_hashes: Vec<String>,
    pub utterances: Vec<UttStatus>,
}

impl RunRecord {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn failed(&self) -> usize {
        self.utterances.iter().filter(|u| u.error.is_some()).count()
    }

    pub fn outcome(&self) -> Outcome {
        Outcome::from_failures(self.failed())
    }
}

/// Runs the configured pipeline on every manifest entry and writes
/// `<out>/<utt_id>/{s1,s2,s3,blend}.wav` plus `<out>/run.json`.
pub fn cmd_enhance(manifest: &Path, config: &RunConfig, out: &Path, jobs: usize) -> Result<RunRecord> {
    let stages = config.build_stages().map_err(|e| match e {
        CliError::Config(_) => e,
        other => CliError::Config(format!("cannot build stages: {other}")),
    })?;
    let entries = read_manifest(manifest)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let utterances = par_map(jobs, &entries, |e| {
        let error = enhance_entry(e, config, &stages, out).err().map(|err| {
            warn!("{}: {err}", e.utt_id);
            err.to_string()
        });
        UttStatus {
            utt_id: e.utt_id.clone(),
            error,
        }
    })?;
    let effective = config.effective();
    let record = RunRecord {
        tool_version: TOOL_VERSION.to_string(),
        config_hash: config.hash(),
        blend: effective.blend.label(),
        config: effective,
        codebook_hashes: config.codebook_hashes()?,
        utterances,
    };
    let path = out.join(RUN_RECORD);
    fs::write(&path, serde_json::to_vec_pretty(&record)?).map_err(io_err(&path))?;
    info!("enhanced {} utterances ({} failed)", record.utterances.len(), record.failed());
    Ok(record)
}

fn enhance_entry(entry: &ManifestEntry, config: &RunConfig, stages: &PipelineStages, out: &Path) -> Result<()> {
    if let Some(e) = &entry.error {
        return Err(CliError::Skipped(format!("simulation failed: {e}")));
    }
    let x = load_at(entry.input_path(), config.sample_rate)?;
    let cfg = config.pipeline_config(utterance_seed(config.seed, &entry.utt_id));
    let y = run_pipeline(&x, stages, &cfg)?;
    let dir = out.join(&entry.utt_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let signals = [y.get(StageId::S1), y.get(StageId::S2), y.get(StageId::S3), &y.blended];
    for (stem, w) in OUTPUT_STEMS.iter().zip(signals) {
        write_wav(w, dir.join(format!("{stem}.wav")), Encoding::Float32)?;
    }
    Ok(())
}
