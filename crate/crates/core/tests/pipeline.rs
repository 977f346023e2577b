use mpp_core::codec::{encode, CodecParams, Message};
use mpp_core::detector::{digitize, slot_stream, sliding_decode, AdcConfig, ThresholdMode, ThresholdPair};
use mpp_core::experiment::{
    compute_eb_nb_db, estimate_pulse_rms, measure_reference_ratio, run_per_curve, run_per_point, ExperimentConfig,
    GainPolicy, SlotOffsetPolicy, ThresholdSetting,
};
use mpp_core::noise::{apply_channel, NoiseConfig};
use mpp_core::pulse::{modulate, modulate_contiguous, scale_signal, synthesize_pulse, PulseShape, SlotTiming};
use mpp_core::waveform::{rms, Waveform};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn awgn_link_decodes() {
    let params = CodecParams::default();
    let timing = SlotTiming::default();
    let words: Vec<Message> = ["Packet-A", "Packet-B", "Packet-C"].iter().map(|w| Message::from_ascii(w).unwrap()).collect();
    let packets: Vec<_> = words.iter().map(|w| encode(w, &params).unwrap()).collect();
    let clean = modulate_contiguous(&packets, &timing, &PulseShape::default()).unwrap();
    let signal = scale_signal(&clean, 0.05).unwrap();
    let rx = apply_channel(&signal, &NoiseConfig::awgn(0.1), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let counts = digitize(&rx, &AdcConfig::default());
    let decisions = slot_stream(&counts, &timing, 0.0, &ThresholdPair::dual(2900, 1100)).unwrap();
    let events = sliding_decode(&decisions, &params, 256).unwrap();
    let got: Vec<(u64, Message)> = events.into_iter().map(|e| (e.end_slot_index, e.message)).collect();
    let want: Vec<(u64, Message)> = words.iter().enumerate().map(|(p, w)| (256 * p as u64 + 255, w.clone())).collect();
    assert_eq!(got, want);
}

#[test]
fn eb_nb_from_cursor_measurement() {
    let timing = SlotTiming::default();
    let shape = PulseShape::default();
    let ratio = measure_reference_ratio(&shape, &timing).unwrap();
    let gain = 0.02;
    let mut slot = vec![0.0; timing.slot_start(1)];
    let pulse = synthesize_pulse(&shape, timing.sample_rate_hz).unwrap();
    slot[..pulse.len()].copy_from_slice(&pulse.samples);
    let small = scale_signal(&Waveform::new(slot, timing.sample_rate_hz, 0.0).unwrap(), gain).unwrap();
    let est = estimate_pulse_rms(&small, ratio, Some(0..small.len())).unwrap();
    assert!((est / small.rms() - 1.0).abs() < 1e-9);
    let db = compute_eb_nb_db(est, est / 10f64.powf(0.8)).unwrap();
    assert!((db - 16.0).abs() < 1e-9);
}

fn quick_config() -> ExperimentConfig {
    ExperimentConfig {
        repetitions: 12,
        snr_grid_db: vec![0.0, 8.0, 16.0],
        probe_messages: 8,
        noise_rms_traces: 2,
        noise_rms_duration_s: 0.17,
        master_seed: 2024,
        ..ExperimentConfig::default()
    }
}

#[test]
fn laboratory_curve_shape() {
    let run = run_per_curve(&quick_config()).unwrap();
    assert!((run.noise_rms_volts - 0.889).abs() < 0.05, "noise rms {}", run.noise_rms_volts);
    assert_eq!(run.points.len(), 6);
    for p in &run.points {
        assert!(p.error.is_none(), "{:?}", p.error);
        assert_eq!(p.packets_sent, 96);
        assert!((p.measured_eb_nb_db - p.eb_nb_db).abs() < 0.5, "{} vs {}", p.measured_eb_nb_db, p.eb_nb_db);
        assert!(p.ci_low <= p.per && p.per <= p.ci_high);
    }
    let per = |db: f64, mode: ThresholdMode| {
        run.points.iter().find(|p| p.eb_nb_db == db && p.threshold_mode == mode).unwrap().per
    };
    assert!(per(0.0, ThresholdMode::Single) > 0.5);
    assert_eq!(per(16.0, ThresholdMode::Dual), 0.0);
}

#[test]
fn runs_are_reproducible() {
    let cfg = ExperimentConfig {
        thresholds: ThresholdSetting::Fixed { upper: 3300, lower: 800 },
        slot_offset: SlotOffsetPolicy::RandomPerMessage,
        ..quick_config()
    };
    let a = run_per_point(&cfg, 4.0, ThresholdMode::Dual).unwrap();
    let b = run_per_point(&cfg, 4.0, ThresholdMode::Dual).unwrap();
    assert_eq!(a, b);
    let other = run_per_point(&ExperimentConfig { master_seed: 7, ..cfg }, 4.0, ThresholdMode::Dual).unwrap();
    assert_eq!(other.packets_sent, a.packets_sent);
}

#[test]
fn fixed_gain_ignores_noise_estimate() {
    let cfg = ExperimentConfig {
        noise: NoiseConfig::quiet(),
        gain: GainPolicy::Fixed(0.06),
        thresholds: ThresholdSetting::Fixed { upper: 2600, lower: 1400 },
        ..quick_config()
    };
    let p = run_per_point(&cfg, 16.0, ThresholdMode::Single).unwrap();
    assert_eq!((p.packets_ok, p.hallucinations), (96, 0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adc_is_monotone(a in -10.0f64..10.0, b in -10.0f64..10.0) {
        let adc = AdcConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(adc.count(lo) <= adc.count(hi));
        prop_assert!(adc.count(hi) <= 4000);
    }

    #[test]
    fn unmarked_slots_stay_silent(v in any::<u64>()) {
        let params = CodecParams::default();
        let timing = SlotTiming::default();
        let packet = encode(&Message::from_u64(v, 64), &params).unwrap();
        let w = modulate(&packet, &timing, &PulseShape::default()).unwrap();
        for s in 0..256 {
            let slot = &w.samples[timing.slot_start(s)..timing.slot_start(s + 1)];
            prop_assert_eq!(packet.get(s), slot.iter().any(|&x| x != 0.0));
        }
        let single = synthesize_pulse(&PulseShape::default(), timing.sample_rate_hz).unwrap();
        let expected = (packet.popcount() as f64).sqrt() * rms(&single.samples) * (single.len() as f64 / w.len() as f64).sqrt();
        prop_assert!((w.rms() / expected - 1.0).abs() < 1e-9);
    }
}
