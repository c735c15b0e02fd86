use urgentkit_core::audio::Waveform;
use urgentkit_core::distortion::{apply_recipe, DistortionRecipe, DistortionStep};
use urgentkit_core::metrics::si_sdr;
use urgentkit_core::pipeline::{
    run_pipeline, FusionStage, GainStage, IdentityStage, NoiseEstimate, PipelineConfig, PipelineStages,
    SpectralSubtraction, WienerFilter,
};
use urgentkit_core::synth;

fn noisy_pair(snr_db: f64, seed: u64) -> (Waveform, Waveform) {
    let rate = 16000;
    let mut x = vec![0.0f32; rate as usize / 2];
    x.extend_from_slice(synth::speech_like(rate, 2.0, seed).samples());
    let speech = Waveform::new(x, rate).unwrap();
    let noise = synth::colored_noise(rate, 3.0, 0.0, seed + 1);
    let recipe = DistortionRecipe {
        seed,
        snr_db: Some(snr_db),
        rir: None,
        chain: Vec::new(),
    };
    let d = apply_recipe(&speech, Some(&noise), None, &recipe).unwrap();
    (d.degraded, d.target)
}

fn enhancers() -> PipelineStages {
    PipelineStages {
        s1: Box::new(WienerFilter::new(NoiseEstimate::LeadingMs(250.0), 0.1).unwrap()),
        s2: Box::new(GainStage(1.0)),
        s3: Box::new(FusionStage::new(
            [0.0, 1.0, 0.0],
            Box::new(SpectralSubtraction::new(NoiseEstimate::LeadingMs(250.0), 2.0, 0.02).unwrap()),
        )),
    }
}

#[test]
fn pipeline_improves_noisy_speech() {
    let (noisy, target) = noisy_pair(0.0, 3);
    let mut cfg = PipelineConfig::for_rate(16000);
    cfg.seed = 9;
    let out = run_pipeline(&noisy, &enhancers(), &cfg).unwrap();
    let base = si_sdr(&target, &noisy).unwrap();
    let s1 = si_sdr(&target, &out.s1).unwrap();
    let blended = si_sdr(&target, &out.blended).unwrap();
    assert!(s1 > base + 2.0, "wiener {s1:.2} vs noisy {base:.2}");
    assert!(blended > base, "blend {blended:.2} vs noisy {base:.2}");
    assert_eq!(out.blended.len(), noisy.len());
}

#[test]
fn pipeline_is_reproducible() {
    let (noisy, _) = noisy_pair(5.0, 11);
    let mut cfg = PipelineConfig::for_rate(16000);
    cfg.seed = 4;
    let a = run_pipeline(&noisy, &enhancers(), &cfg).unwrap();
    let b = run_pipeline(&noisy, &enhancers(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn identity_pipeline_passes_through_a_degraded_chain() {
    let speech = synth::speech_like(16000, 1.5, 5);
    let recipe = DistortionRecipe {
        seed: 2,
        snr_db: None,
        rir: None,
        chain: vec![
            DistortionStep::BandwidthLimit { cutoff_hz: 4000.0 },
            DistortionStep::PacketLoss {
                rate: 0.1,
                burst_ms: 20.0,
            },
        ],
    };
    let d = apply_recipe(&speech, None, None, &recipe).unwrap();
    let stages = PipelineStages {
        s1: Box::new(IdentityStage),
        s2: Box::new(IdentityStage),
        s3: Box::new(IdentityStage),
    };
    let out = run_pipeline(&d.degraded, &stages, &PipelineConfig::unshifted()).unwrap();
    assert_eq!(out.blended, d.degraded);
}
