mod common;

use std::fs;
use std::path::Path;

use common::{run, s, write_corpus};
use urgentkit::enhance::RunRecord;
use urgentkit::manifest::{read_manifest, write_manifest, ManifestEntry};
use urgentkit::report::EvalReport;
use urgentkit::{config::RunConfig, evaluate::cmd_evaluate};
use urgentkit_core::audio::{read_wav, write_wav, Encoding, Waveform};
use urgentkit_core::distortion::DistortionRecipe;
use urgentkit_core::metrics::{MetricKind, CAPPED_DB};

const IDENTITY_CONFIG: &str = r#"{
    "stages": {"s1": {"kind": "identity"}, "s2": {"kind": "identity"}, "s3": {"kind": "identity"}},
    "shifts": {"s1": {"count": 3}, "s2": {"offsets": [0]}, "s3": {"count": 2}},
    "blend": ["s2", "s3"]
}"#;

fn clean_manifest(dir: &Path, rate: u32) -> std::path::PathBuf {
    let p = write_corpus(dir, 2, rate, 1.0, 5);
    let mut entries = read_manifest(&p).unwrap();
    for e in &mut entries {
        e.noise_path = None;
        e.recipe = Some(DistortionRecipe::clean(1));
    }
    write_manifest(&p, &entries).unwrap();
    p
}

#[test]
fn empty_manifest_gives_empty_output() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.jsonl");
    fs::write(&m, "").unwrap();
    let out = dir.path().join("out");
    let o = run(&["simulate", "--manifest", s(&m), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(&out).unwrap().count(), 0);
}

#[test]
fn clean_recipe_passes_audio_through() {
    let dir = tempfile::tempdir().unwrap();
    let m = clean_manifest(dir.path(), 16000);
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--manifest", s(&m), "--out", s(&out), "--jobs", "2"]);
    assert_eq!(o.status.code(), Some(0));
    for e in read_manifest(&out.join("manifest.jsonl")).unwrap() {
        let clean = read_wav(&e.clean_path).unwrap();
        assert_eq!(read_wav(e.degraded_path.unwrap()).unwrap(), clean);
        assert_eq!(read_wav(e.target_path.unwrap()).unwrap(), clean);
    }
}

#[test]
fn per_entry_failures_are_isolated() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_corpus(dir.path(), 2, 8000, 0.5, 1);
    let mut entries = read_manifest(&m).unwrap();
    entries.push(ManifestEntry::new("missing", dir.path().join("nope.wav"), 8000));
    write_manifest(&m, &entries).unwrap();
    let out = dir.path().join("sim");
    let o = run(&["simulate", "--manifest", s(&m), "--out", s(&out), "--seed", "3"]);
    assert_eq!(o.status.code(), Some(1));
    let done = read_manifest(&out.join("manifest.jsonl")).unwrap();
    assert_eq!(done.len(), 3);
    assert!(done[..2].iter().all(|e| e.error.is_none() && e.recipe.is_some()));
    assert!(done[2].error.as_deref().unwrap().contains("nope.wav"));

    // enhance and evaluate carry the failure through as error rows
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, IDENTITY_CONFIG.replace("\"stages\"", "\"sample_rate\": 8000, \"stages\"")).unwrap();
    let enh = dir.path().join("enh");
    let sim_manifest = out.join("manifest.jsonl");
    let o = run(&["enhance", "--manifest", s(&sim_manifest), "--config", s(&cfg), "--out", s(&enh)]);
    assert_eq!(o.status.code(), Some(1));
    let report = cmd_evaluate(&sim_manifest, &enh, &[MetricKind::SiSdr, MetricKind::Lsd], 1).unwrap();
    assert_eq!(report.rows.len(), 3 * 5 * 2);
    assert_eq!(report.error_rows(), 5 * 2);
    assert!(report.rows.iter().filter(|r| r.utt_id == "missing").all(|r| r.error.is_some()));
}

#[test]
fn identity_pipeline_reproduces_input() {
    let dir = tempfile::tempdir().unwrap();
    let m = clean_manifest(dir.path(), 16000);
    let sim = dir.path().join("sim");
    assert_eq!(run(&["simulate", "--manifest", s(&m), "--out", s(&sim)]).status.code(), Some(0));
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, IDENTITY_CONFIG).unwrap();
    let enh = dir.path().join("enh");
    let sim_manifest = sim.join("manifest.jsonl");
    let o = run(&["enhance", "--manifest", s(&sim_manifest), "--config", s(&cfg), "--out", s(&enh)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for e in read_manifest(&sim_manifest).unwrap() {
        let x = read_wav(e.degraded_path.unwrap()).unwrap();
        for stem in ["s1", "s2", "s3", "blend"] {
            let y = read_wav(enh.join(&e.utt_id).join(format!("{stem}.wav"))).unwrap();
            let err = x.samples().iter().zip(y.samples()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
            assert_eq!(y.len(), x.len());
            assert!(err <= 1e-6, "{stem}: {err}");
        }
    }

    // sidecar: effective config reparses to itself
    let record = RunRecord::load(&enh.join("run.json")).unwrap();
    assert_eq!(record.blend, "s2+s3");
    assert_eq!(record.config.shift_configs()[0].offsets.len(), 3);
    let text = serde_json::to_string(&record.config).unwrap();
    let back = RunConfig::parse(&text).unwrap();
    assert_eq!(back, record.config);
    assert_eq!(back.hash(), record.config_hash);

    // target == enhanced: capped SI-SDR, zero LSD and MCD
    let report_path = dir.path().join("report.jsonl");
    let o = run(&[
        "evaluate",
        "--manifest",
        s(&sim_manifest),
        "--enhanced",
        s(&enh),
        "--out",
        s(&report_path),
        "--metrics",
        "si_sdr,lsd,mcd",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = EvalReport::read(&report_path).unwrap();
    assert_eq!(report.rows.len(), 2 * 5 * 3);
    for r in &report.rows {
        let v = r.value.unwrap();
        match r.metric.as_str() {
            "si_sdr" => assert!(r.capped && v == CAPPED_DB, "{r:?}"),
            _ => assert!(v.abs() < 1e-9, "{r:?}"),
        }
    }
    let table = fs::read_to_string(report_path.with_extension("txt")).unwrap();
    assert!(table.contains("Blend: S2 & S3"));
    let s1_line = table.lines().find(|l| l.starts_with("Stage 1 (S1)")).unwrap();
    assert_eq!(s1_line.split('|').nth(1).unwrap().trim(), "3");
    let o = run(&["report", s(&report_path)]);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), table);
}

#[test]
fn zero_db_white_noise_scores_zero_sdr() {
    let dir = tempfile::tempdir().unwrap();
    let rate = 16000;
    // continuous tone: every frame is active, so active and global SNR agree
    let tone: Vec<f64> = (0..rate as usize * 2)
        .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 440.0 * i as f64 / rate as f64).sin())
        .collect();
    write_wav(&Waveform::from_f64(&tone, rate).unwrap(), dir.path().join("c.wav"), Encoding::Float32).unwrap();
    let noise = urgentkit_core::synth::colored_noise(rate, 2.0, 0.0, 4);
    write_wav(&noise, dir.path().join("n.wav"), Encoding::Float32).unwrap();
    let mut e = ManifestEntry::new("tone", "c.wav", rate);
    e.noise_path = Some("n.wav".into());
    e.recipe = Some(DistortionRecipe {
        snr_db: Some(0.0),
        ..DistortionRecipe::clean(2)
    });
    let m = dir.path().join("m.jsonl");
    write_manifest(&m, &[e]).unwrap();
    let sim = dir.path().join("sim");
    assert_eq!(run(&["simulate", "--manifest", s(&m), "--out", s(&sim)]).status.code(), Some(0));
    let report = cmd_evaluate(&sim.join("manifest.jsonl"), &dir.path().join("none"), &[MetricKind::Sdr], 1).unwrap();
    let noisy = report.aggregate("noisy", "sdr").unwrap().mean.unwrap();
    assert!(noisy.abs() <= 0.2, "{noisy}");
}

#[test]
fn usage_and_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let m = clean_manifest(dir.path(), 8000);
    let o = run(&["evaluate", "--manifest", s(&m), "--enhanced", "x", "--out", "r.jsonl", "--metrics", "pesq"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("pesq") && err.contains("si_sdr"), "{err}");

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"stages": {"s1": {"kind": "identity"}, "s3": {"kind": "identity"}}}"#).unwrap();
    let o = run(&["enhance", "--manifest", s(&m), "--config", s(&cfg), "--out", s(&dir.path().join("e"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("s2"));

    let o = run(&["simulate", "--manifest", s(&m)]);
    assert_eq!(o.status.code(), Some(2));
    fs::write(&m, "not json\n").unwrap();
    let o = run(&["simulate", "--manifest", s(&m), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn log_level_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let m = clean_manifest(dir.path(), 8000);
    let out = dir.path().join("sim");
    let o = common::bin()
        .args(["simulate", "--manifest", s(&m), "--out", s(&out)])
        .env("URGENTKIT_LOG", "info")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("simulated 2 utterances"));
    let o = common::bin()
        .args(["simulate", "--manifest", s(&m), "--out", s(&out)])
        .env("URGENTKIT_LOG", "loud")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stderr).contains("URGENTKIT_LOG"));
}

#[test]
fn codec_train_and_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_corpus(dir.path(), 3, 16000, 1.5, 40);
    let cb = dir.path().join("cb.rvq");
    let train = |out: &Path| {
        let o = run(&[
            "codec", "train", "--manifest", s(&m), "--out", s(out), "--levels", "3", "--size", "16", "--seed", "9",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap().trim().to_string()
    };
    let h1 = train(&cb);
    let h2 = train(&dir.path().join("cb2.rvq"));
    assert_eq!(h1.len(), 64);
    assert_eq!(h1, h2);

    // silence in, silence out
    let silent = dir.path().join("silent.wav");
    write_wav(&Waveform::zeros(16000, 16000).unwrap(), &silent, Encoding::Float32).unwrap();
    let sm = dir.path().join("silent.jsonl");
    write_manifest(&sm, &[ManifestEntry::new("quiet", &silent, 16000)]).unwrap();
    let out = dir.path().join("rt");
    let o = run(&["codec", "roundtrip", "--codebook", s(&cb), "--manifest", s(&sm), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: urgentkit::codec_cmd::RoundTripReport =
        serde_json::from_slice(&fs::read(out.join("roundtrip.json")).unwrap()).unwrap();
    assert_eq!(report.codebook_hash, h1);
    assert!(report.mean.iter().all(|d| *d <= 1e-3), "{:?}", report.mean);
    assert!(read_wav(out.join("quiet/roundtrip.wav")).unwrap().energy() <= 1e-6);

    // a flipped byte is refused
    let mut bytes = fs::read(&cb).unwrap();
    bytes[60] ^= 0x10;
    fs::write(&cb, bytes).unwrap();
    let o = run(&["codec", "roundtrip", "--codebook", s(&cb), "--manifest", s(&sm), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("hash"));
}
