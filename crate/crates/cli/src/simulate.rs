use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use urgentkit_core::audio::{read_wav, resample, write_wav, Encoding, Waveform};
use urgentkit_core::distortion::{apply_recipe, RecipeSampler};
use urgentkit_core::seed::utterance_seed;

use crate::error::{io_err, Outcome, Result};
use crate::manifest::{read_manifest, write_manifest, ManifestEntry};
use crate::par_map;

pub const MANIFEST_OUT: &str = "manifest.jsonl";

#[derive(Debug)]
pub struct SimulateSummary {
    pub entries: Vec<ManifestEntry>,
    pub manifest_out: Option<PathBuf>,
    pub failed: usize,
}

impl SimulateSummary {
    pub fn outcome(&self) -> Outcome {
        Outcome::from_failures(self.failed)
    }
}

/// Reads `path` and resamples to `rate` when needed.
pub(crate) fn load_at(path: &Path, rate: u32) -> Result<Waveform> {
    let w = read_wav(path)?;
    Ok(if w.sample_rate() == rate { w } else { resample(&w, rate) })
}

/// Writes `<out>/<utt_id>/degraded.wav` and `target.wav` for every entry
/// plus `<out>/manifest.jsonl` with the resolved recipes. Entries without a
/// recipe get one drawn from `sampler` with the per-utterance seed.
pub fn cmd_simulate(
    manifest: &Path,
    out: &Path,
    seed: u64,
    jobs: usize,
    sampler: &RecipeSampler,
) -> Result<SimulateSummary> {
    let entries = read_manifest(manifest)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    if entries.is_empty() {
        return Ok(SimulateSummary {
            entries,
            manifest_out: None,
            failed: 0,
        });
    }
    let done = par_map(jobs, &entries, |e| simulate_entry(e, out, seed, sampler))?;
    let failed = done.iter().filter(|e| e.error.is_some()).count();
    let manifest_out = out.join(MANIFEST_OUT);
    write_manifest(&manifest_out, &done)?;
    info!("simulated {} utterances ({failed} failed)", done.len());
    Ok(SimulateSummary {
        entries: done,
        manifest_out: Some(manifest_out),
        failed,
    })
}

fn simulate_entry(entry: &ManifestEntry, out: &Path, seed: u64, sampler: &RecipeSampler) -> ManifestEntry {
    let mut done = entry.clone();
    done.degraded_path = None;
    done.target_path = None;
    done.error = None;
    if let Err(e) = try_simulate(&mut done, out, seed, sampler) {
        warn!("{}: {e}", entry.utt_id);
        done.error = Some(e.to_string());
    }
    done
}

fn try_simulate(entry: &mut ManifestEntry, out: &Path, seed: u64, sampler: &RecipeSampler) -> Result<()> {
    let rate = entry.sample_rate;
    let clean = load_at(&entry.clean_path, rate)?;
    let noise = entry.noise_path.as_deref().map(|p| load_at(p, rate)).transpose()?;
    let rir = entry.rir_path.as_deref().map(|p| load_at(p, rate)).transpose()?;
    let recipe = match &entry.recipe {
        Some(r) => r.clone(),
        None => {
            let rir_id = entry
                .rir_path
                .as_deref()
                .and_then(Path::file_stem)
                .map(|s| s.to_string_lossy().into_owned());
            sampler.sample(utterance_seed(seed, &entry.utt_id), rate, noise.is_some(), rir_id)
        }
    };
    entry.recipe = Some(recipe.clone());
    let d = apply_recipe(&clean, noise.as_ref(), rir.as_ref(), &recipe)?;
    let dir = out.join(&entry.utt_id);
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_wav(&d.degraded, dir.join("degraded.wav"), Encoding::Float32)?;
    write_wav(&d.target, dir.join("target.wav"), Encoding::Float32)?;
    let rel = PathBuf::from(&entry.utt_id);
    entry.degraded_path = Some(rel.join("degraded.wav"));
    entry.target_path = Some(rel.join("target.wav"));
    Ok(())
}
