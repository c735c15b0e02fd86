#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use urgentkit::manifest::{write_manifest, ManifestEntry};
use urgentkit_core::audio::{write_wav, Encoding, Waveform};
use urgentkit_core::synth;

pub const LEAD_S: f64 = 0.3;

/// Synthetic speech with `LEAD_S` of leading silence.
pub fn utterance(rate: u32, duration_s: f64, seed: u64) -> Waveform {
    let s = synth::speech_like(rate, duration_s, seed);
    let mut x = vec![0.0f32; (LEAD_S * rate as f64) as usize];
    x.extend_from_slice(s.samples());
    Waveform::new(x, rate).unwrap()
}

/// Writes `n` clean/noise pairs and a manifest without recipes.
pub fn write_corpus(dir: &Path, n: usize, rate: u32, duration_s: f64, seed: u64) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let mut entries = Vec::new();
    for i in 0..n {
        let id = format!("utt{i:03}");
        let clean = utterance(rate, duration_s, seed + i as u64);
        let noise = synth::colored_noise(rate, duration_s + LEAD_S + 0.5, 0.5 * (i % 3) as f64, seed + 1000 + i as u64);
        write_wav(&clean, dir.join(format!("{id}_clean.wav")), Encoding::Float32).unwrap();
        write_wav(&noise, dir.join(format!("{id}_noise.wav")), Encoding::Float32).unwrap();
        let mut e = ManifestEntry::new(&id, format!("{id}_clean.wav"), rate);
        e.noise_path = Some(format!("{id}_noise.wav").into());
        entries.push(e);
    }
    let p = dir.join("manifest.jsonl");
    write_manifest(&p, &entries).unwrap();
    p
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_urgentkit"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir`, relative path and bytes, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
