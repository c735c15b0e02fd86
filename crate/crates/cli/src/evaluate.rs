use std::path::Path;

use log::info;
use sha2::{Digest, Sha256};
use urgentkit_core::audio::{read_wav, resample, Waveform};
use urgentkit_core::metrics::MetricKind;

use crate::enhance::{RunRecord, OUTPUT_STEMS, RUN_RECORD};
use crate::error::{CliError, Result};
use crate::manifest::{read_manifest, ManifestEntry};
use crate::report::{EvalReport, ReportMeta, ReportRow, SystemInfo};
use crate::{par_map, TOOL_VERSION};

/// Parses a comma-separated metric list.
pub fn parse_metrics(list: &str) -> Result<Vec<MetricKind>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind = MetricKind::parse(name).ok_or_else(|| {
            let valid: Vec<&str> = MetricKind::ALL.iter().map(|k| k.name()).collect();
            CliError::Usage(format!("unknown metric `{name}`; valid names: {}", valid.join(", ")))
        })?;
        if !out.contains(&kind) {
            out.push(kind);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("no metrics requested".into()));
    }
    Ok(out)
}

fn systems(record: Option<&RunRecord>) -> Vec<SystemInfo> {
    let shifts = |i: usize| {
        record
            .map(|r| r.config.shift_configs()[i].offsets.len())
            .filter(|&n| n > 1)
    };
    let blend = record.map_or("blend".to_string(), |r| {
        let members: Vec<String> = r.blend.split('+').map(|m| m.to_uppercase()).collect();
        format!("Blend: {}", members.join(" & "))
    });
    let mut out = vec![SystemInfo {
        name: "noisy".into(),
        label: "Noisy".into(),
        shifts: None,
    }];
    for (i, stem) in OUTPUT_STEMS.iter().enumerate() {
        let (label, shifts) = if i < 3 {
            (format!("Stage {} (S{})", i + 1, i + 1), shifts(i))
        } else {
            (blend.clone(), None)
        };
        out.push(SystemInfo {
            name: stem.to_string(),
            label,
            shifts,
        });
    }
    out
}

/// Estimate resampled to the reference rate and length.
fn align(estimate: Waveform, reference: &Waveform) -> Waveform {
    let e = if estimate.sample_rate() == reference.sample_rate() {
        estimate
    } else {
        resample(&estimate, reference.sample_rate())
    };
    e.fit_to_len(reference.len())
}

fn rows_for(entry: &ManifestEntry, enhanced: &Path, systems: &[SystemInfo], metrics: &[MetricKind]) -> Vec<ReportRow> {
    let row = |system: &str, metric: MetricKind, res: std::result::Result<(f64, bool), String>| {
        let (value, capped, error) = match res {
            Ok((v, c)) => (Some(v), c, None),
            Err(e) => (None, false, Some(e)),
        };
        ReportRow {
            utt_id: entry.utt_id.clone(),
            system: system.to_string(),
            metric: metric.name().to_string(),
            value,
            capped,
            error,
        }
    };
    let reference = entry
        .error
        .as_ref()
        .map_or_else(|| read_wav(entry.reference_path()).map_err(|e| e.to_string()), |e| Err(format!("simulation failed: {e}")));
    let mut out = Vec::with_capacity(systems.len() * metrics.len());
    for sys in systems {
        let path = if sys.name == "noisy" {
            entry.input_path().to_path_buf()
        } else {
            enhanced.join(&entry.utt_id).join(format!("{}.wav", sys.name))
        };
        let estimate = reference
            .clone()
            .and_then(|r| read_wav(&path).map(|e| (align(e, &r), r)).map_err(|e| e.to_string()));
        for &m in metrics {
            let res = estimate.as_ref().map_err(Clone::clone).and_then(|(e, r)| {
                m.evaluate(r, e).map(|v| (v.value, v.capped)).map_err(|e| e.to_string())
            });
            out.push(row(&sys.name, m, res));
        }
    }
    out
}

/// Scores the degraded input (`noisy`) and every enhanced output against
/// the target. Failures become error rows, so the report always holds
/// `utterances × systems × metrics` rows.
///
/// `run_config_hash` is the SHA-256 of the enhancement config hash (empty
/// when `enhanced` has no run record) followed by the metric names.
pub fn cmd_evaluate(manifest: &Path, enhanced: &Path, metrics: &[MetricKind], jobs: usize) -> Result<EvalReport> {
    if metrics.is_empty() {
        return Err(CliError::Usage("no metrics requested".into()));
    }
    let entries = read_manifest(manifest)?;
    let record_path = enhanced.join(RUN_RECORD);
    let record = record_path.exists().then(|| RunRecord::load(&record_path)).transpose()?;
    let systems = systems(record.as_ref());
    let per_utt = par_map(jobs, &entries, |e| rows_for(e, enhanced, &systems, metrics))?;
    let rows: Vec<ReportRow> = per_utt.into_iter().flatten().collect();

    let mut h = Sha256::new();
    h.update(record.as_ref().map_or("", |r| r.config_hash.as_str()).as_bytes());
    for m in metrics {
        h.update(b"\n");
        h.update(m.name().as_bytes());
    }
    let meta = ReportMeta {
        tool_version: TOOL_VERSION.to_string(),
        run_config_hash: crate::hex(h.finalize().as_slice()),
        metrics: metrics.iter().map(|m| m.name().to_string()).collect(),
        systems,
        utterances: entries.len(),
    };
    let report = EvalReport::new(meta, rows);
    info!("evaluated {} rows ({} errors)", report.rows.len(), report.error_rows());
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_list_parsing() {
        assert_eq!(parse_metrics("si_sdr, sdr,si_sdr").unwrap(), vec![MetricKind::SiSdr, MetricKind::Sdr]);
        let err = parse_metrics("si_sdr,pesq").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("pesq") && msg.contains("mel_distance"), "{msg}");
        assert_eq!(err.exit_code(), 2);
        assert!(parse_metrics(" , ").is_err());
    }

    #[test]
    fn system_labels_follow_the_run() {
        let s = systems(None);
        let labels: Vec<&str> = s.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["Noisy", "Stage 1 (S1)", "Stage 2 (S2)", "Stage 3 (S3)", "blend"]);
        assert!(s.iter().all(|s| s.shifts.is_none()));
    }
}
