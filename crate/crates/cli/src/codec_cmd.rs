use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use urgentkit_core::audio::{read_wav, resample, write_wav, Encoding, Waveform};
use urgentkit_core::codec::{self, train_codec, Codec, FrontendConfig, RvqCodebooks};
use urgentkit_core::metrics::{multiscale_mel_distance, MultiScaleMelConfig};

use crate::error::{io_err, Outcome, Result};
use crate::manifest::read_manifest;
use crate::par_map;

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub levels: usize,
    pub size: usize,
    pub seed: u64,
    pub max_frames: usize,
    pub frontend: FrontendConfig,
}

impl Default for TrainArgs {
    fn default() -> Self {
        Self {
            levels: codec::DEFAULT_LEVELS,
            size: codec::DEFAULT_CODEBOOK_SIZE,
            seed: 0,
            max_frames: 20_000,
            frontend: FrontendConfig::default(),
        }
    }
}

/// Trains codebooks on the clean files of `manifest` and writes the RVQ1
/// container to `out`. Returns the codebooks and their content hash.
pub fn cmd_codec_train(manifest: &Path, out: &Path, args: &TrainArgs) -> Result<(RvqCodebooks, String)> {
    let entries = read_manifest(manifest)?;
    let corpus: Vec<Waveform> = entries
        .iter()
        .map(|e| read_wav(&e.clean_path))
        .collect::<std::result::Result<_, _>>()?;
    let cb = train_codec(&corpus, args.frontend, args.levels, args.size, args.seed, args.max_frames)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    codec::file::save(&cb, out)?;
    let hash = codec::file::content_hash(&cb);
    info!("wrote {} ({} levels × {} codewords, sha256 {hash})", out.display(), cb.levels(), cb.size());
    Ok((cb, hash))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripRow {
    pub utt_id: String,
    /// Mel distance after decoding the first `q + 1` levels.
    #[serde(default)]
    pub mel_distance: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTripReport {
    pub codebook_hash: String,
    pub levels: usize,
    pub rows: Vec<RoundTripRow>,
    /// Mean over successful rows, per prefix length.
    pub mean: Vec<f64>,
}

impl RoundTripReport {
    pub fn failed(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    pub fn outcome(&self) -> Outcome {
        Outcome::from_failures(self.failed())
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("Levels | Mel distance\n-------+-------------\n");
        for (q, d) in self.mean.iter().enumerate() {
            let _ = writeln!(out, "{:<6} | {d:>12.4}", q + 1);
        }
        let ok = self.rows.len() - self.failed();
        let _ = writeln!(out, "\n{ok} of {} utterances", self.rows.len());
        out
    }
}

fn round_trip(codec: &Codec, clean: &Path, out_wav: &Path) -> Result<Vec<f64>> {
    let w = read_wav(clean)?;
    let grid = codec.encode(&w)?;
    let cfg = MultiScaleMelConfig::default();
    let mut dists = Vec::with_capacity(codec.codebooks().levels());
    let mut last = None;
    for q in 1..=codec.codebooks().levels() {
        let y = codec.decode_levels(&grid, q)?;
        let y = resample(&y, w.sample_rate()).fit_to_len(w.len());
        dists.push(multiscale_mel_distance(&w, &y, &cfg)?);
        last = Some(y);
    }
    if let Some(y) = last {
        write_wav(&y, out_wav, Encoding::Float32)?;
    }
    Ok(dists)
}

/// Writes `<out>/<utt_id>/roundtrip.wav` (all levels) for every clean file
/// and `<out>/roundtrip.json` / `roundtrip.txt` with mel distance per
/// level prefix.
pub fn cmd_codec_roundtrip(codebook: &Path, manifest: &Path, out: &Path, jobs: usize) -> Result<RoundTripReport> {
    let cb = codec::file::load(codebook)?;
    let hash = codec::file::content_hash(&cb);
    let codec = Codec::new(cb)?;
    let entries = read_manifest(manifest)?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let rows = par_map(jobs, &entries, |e| {
        let dir = out.join(&e.utt_id);
        let res = fs::create_dir_all(&dir)
            .map_err(io_err(&dir))
            .and_then(|_| round_trip(&codec, &e.clean_path, &dir.join("roundtrip.wav")));
        match res {
            Ok(mel_distance) => RoundTripRow {
                utt_id: e.utt_id.clone(),
                mel_distance,
                error: None,
            },
            Err(err) => {
                warn!("{}: {err}", e.utt_id);
                RoundTripRow {
                    utt_id: e.utt_id.clone(),
                    mel_distance: Vec::new(),
                    error: Some(err.to_string()),
                }
            }
        }
    })?;
    let levels = codec.codebooks().levels();
    let ok: Vec<&RoundTripRow> = rows.iter().filter(|r| r.error.is_none()).collect();
    let mean = (0..levels)
        .map(|q| ok.iter().map(|r| r.mel_distance[q]).sum::<f64>() / ok.len().max(1) as f64)
        .collect();
    let report = RoundTripReport {
        codebook_hash: hash,
        levels,
        rows,
        mean,
    };
    let json = out.join("roundtrip.json");
    fs::write(&json, serde_json::to_vec_pretty(&report)?).map_err(io_err(&json))?;
    let txt = out.join("roundtrip.txt");
    fs::write(&txt, report.to_table()).map_err(io_err(&txt))?;
    Ok(report)
}
