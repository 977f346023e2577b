use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{encode, random_packet, sub_seed, Codec, CodecParams, Message, Packet};
use crate::detector::{
    calibrate_thresholds, slot_extrema_from_volts, AdcConfig, Calibration, CalibrationLog, SlidingDecoder,
    SlotExtrema, ThresholdMode, ThresholdPair, DEFAULT_DECODE_BUDGET,
};
use crate::error::{param, Error, Result};
use crate::noise::{NoiseConfig, NoiseGenerator};
use crate::pulse::{modulate_contiguous, synthesize_pulse, PulseShape, SlotTiming};
use crate::waveform::{snap, Waveform};

use super::curve::PerCurvePoint;
use super::energy::{compute_eb_nb_db_with, estimate_pulse_rms, measure_reference_ratio, EbNbConvention};

pub const DEFAULT_WORDS: [&str; 8] = [
    "Hello1!\n", "Hello2!\n", "Hello3!\n", "Hello4!\n", "Hello5!\n", "Hello6!\n", "Hello7!\n", "Hello8!\n",
];

const MESSAGE_STREAM: u64 = 0x6d73_6773;
const PROBE_STREAM: u64 = 0x7072_6f62;
const NOISE_RMS_STREAM: u64 = 0x726d_7320;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainPolicy {
    /// Scale the pulse so the requested Eb/Nb holds against the measured noise rms.
    #[default]
    MatchSnr,
    /// Use this gain regardless of the grid value.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlotOffsetPolicy {
    /// Detector slot grid starts this many seconds after the packet grid.
    Fixed(f64),
    /// A fresh uniform offset within one slot for every message. Offsets that
    /// put the positive and negative lobes in different slots leave the lower
    /// threshold nothing to rescue, which caps the dual threshold advantage.
    RandomPerMessage,
}

impl Default for SlotOffsetPolicy {
    fn default() -> Self {
        Self::Fixed(0.0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSetting {
    /// Run the stepped sweep at every grid point and mode.
    #[default]
    Calibrate,
    Fixed { upper: u16, lower: u16 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub codec: CodecParams,
    pub timing: SlotTiming,
    pub shape: PulseShape,
    pub noise: NoiseConfig,
    pub adc: AdcConfig,
    pub words: Vec<Message>,
    pub inter_message_pause_s: f64,
    pub thresholds: ThresholdSetting,
    pub modes: Vec<ThresholdMode>,
    pub snr_grid_db: Vec<f64>,
    pub repetitions: usize,
    pub master_seed: u64,
    pub slot_offset: SlotOffsetPolicy,
    pub gain: GainPolicy,
    pub convention: EbNbConvention,
    pub noise_rms_traces: usize,
    pub noise_rms_duration_s: f64,
    pub probe_messages: usize,
    pub decode_budget: u64,
    /// Defaults to one packet length.
    pub dedup_window: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            codec: CodecParams::default(),
            timing: SlotTiming::default(),
            shape: PulseShape::default(),
            noise: NoiseConfig::laboratory(),
            adc: AdcConfig::default(),
            words: DEFAULT_WORDS
                .iter()
                .map(|w| Message::from_ascii(w).expect("eight ASCII bytes"))
                .collect(),
            inter_message_pause_s: 0.05,
            thresholds: ThresholdSetting::Calibrate,
            modes: vec![ThresholdMode::Single, ThresholdMode::Dual],
            snr_grid_db: vec![0.0, 4.0, 8.0, 12.0, 16.0],
            repetitions: 1000,
            master_seed: 0,
            slot_offset: SlotOffsetPolicy::Fixed(0.0),
            gain: GainPolicy::MatchSnr,
            convention: EbNbConvention::Energy,
            noise_rms_traces: 16,
            noise_rms_duration_s: 0.2,
            probe_messages: 50,
            decode_budget: DEFAULT_DECODE_BUDGET,
            dedup_window: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.codec.validate()?;
        self.timing.validate()?;
        self.shape.validate()?;
        self.noise.validate()?;
        self.adc.validate()?;
        if self.codec.packet_slots != self.timing.slots_per_packet {
            return param("codec packet_slots must equal timing slots_per_packet");
        }
        if self.words.is_empty() || self.words.iter().any(|w| w.len() != self.codec.message_bits) {
            return param(format!("every word must have {} bits", self.codec.message_bits));
        }
        if self.modes.is_empty() {
            return param("at least one threshold mode is required");
        }
        if self.snr_grid_db.is_empty() || self.snr_grid_db.windows(2).any(|w| !(w[1] > w[0])) {
            return param("snr grid must be non-empty and strictly increasing");
        }
        if self.repetitions == 0 || self.probe_messages == 0 {
            return param("repetitions and probe_messages must be positive");
        }
        if !(self.inter_message_pause_s >= 0.0) {
            return param("inter-message pause must be non-negative");
        }
        if let SlotOffsetPolicy::Fixed(o) = self.slot_offset {
            if !(0.0..self.timing.slot_duration_s).contains(&o) {
                return param("fixed slot offset must lie within one slot");
            }
        }
        if let GainPolicy::Fixed(g) = self.gain {
            if !(g >= 0.0 && g.is_finite()) {
                return param("fixed gain must be non-negative");
            }
        }
        if let ThresholdSetting::Fixed { upper, lower } = self.thresholds {
            for &mode in &self.modes {
                pair_for(mode, upper, lower).validate(&self.adc)?;
            }
        }
        if self.noise_rms_traces == 0 || !(self.noise_rms_duration_s > 0.0) {
            return param("noise rms estimate needs traces and a positive duration");
        }
        Ok(())
    }

    fn message_period_s(&self) -> f64 {
        self.words.len() as f64 * self.timing.packet_duration_s() + self.inter_message_pause_s
    }

    fn dedup(&self) -> u64 {
        self.dedup_window.unwrap_or(self.codec.packet_slots as u64)
    }
}

fn pair_for(mode: ThresholdMode, upper: u16, lower: u16) -> ThresholdPair {
    match mode {
        ThresholdMode::Single => ThresholdPair::single(upper),
        ThresholdMode::Dual => ThresholdPair::dual(upper, lower),
    }
}

/// Everything shared by the messages of one grid point.
struct PointSim<'a> {
    cfg: &'a ExperimentConfig,
    generator: NoiseGenerator,
    signal: Vec<f64>,
    lead_samples: usize,
    buffer_len: usize,
}

struct MessageOutcome {
    ok: Vec<bool>,
    hallucinations: u64,
    exhausted: u64,
    decoded: Vec<Message>,
}

impl<'a> PointSim<'a> {
    fn new(cfg: &'a ExperimentConfig, gain: f64) -> Result<Self> {
        let packets: Vec<Packet> = cfg.words.iter().map(|w| encode(w, &cfg.codec)).collect::<Result<_>>()?;
        let mut signal = modulate_contiguous(&packets, &cfg.timing, &cfg.shape)?.samples;
        signal.iter_mut().for_each(|v| *v *= gain);
        let n = cfg.codec.packet_slots;
        let total_slots = n + cfg.words.len() * n + 2;
        let lead_samples = cfg.timing.slot_start(n);
        let buffer_len = snap((total_slots + 1) as f64 * cfg.timing.slot_duration_s, cfg.timing.sample_rate_hz)
            .max(lead_samples + signal.len());
        Ok(Self {
            cfg,
            generator: NoiseGenerator::new(&cfg.noise)?,
            signal,
            lead_samples,
            buffer_len,
        })
    }

    fn extrema(&self, message_index: usize, key: u64) -> Vec<SlotExtrema> {
        let cfg = self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let noise_key: u64 = rng.random();
        let phase: f64 = rng.random();
        let offset = match cfg.slot_offset {
            SlotOffsetPolicy::Fixed(o) => o,
            SlotOffsetPolicy::RandomPerMessage => rng.random::<f64>() * cfg.timing.slot_duration_s,
        };
        let start_time = message_index as f64 * cfg.message_period_s() + phase / cfg.noise.line.frequency_hz;
        let fs = cfg.timing.sample_rate_hz;
        let mut buf = vec![0.0; self.buffer_len];
        buf[self.lead_samples..self.lead_samples + self.signal.len()].copy_from_slice(&self.signal);
        self.generator.add_to(&mut buf, (start_time * fs).round() as i64, fs, noise_key);
        let mut ex = slot_extrema_from_volts(&buf, &cfg.timing, offset, &cfg.adc);
        ex.truncate(cfg.codec.packet_slots * (cfg.words.len() + 1) + 2);
        ex
    }

    fn evaluate(&self, extrema: &[SlotExtrema], thresholds: &ThresholdPair) -> Result<MessageOutcome> {
        let cfg = self.cfg;
        let n = cfg.codec.packet_slots as u64;
        let mut decoder = SlidingDecoder::new(cfg.codec, cfg.dedup())?.with_budget(cfg.decode_budget);
        let mut ok = vec![false; cfg.words.len()];
        let mut hallucinations = 0;
        let mut decoded = Vec::new();
        for e in extrema {
            let Some(event) = decoder.push(thresholds.is_mark(e.max_count, e.min_count)) else {
                continue;
            };
            let mut known = false;
            for (p, w) in cfg.words.iter().enumerate() {
                if *w == event.message {
                    known = true;
                    let expected = n + (p as u64 + 1) * n - 1;
                    if event.end_slot_index.abs_diff(expected) <= 1 {
                        ok[p] = true;
                    }
                }
            }
            if !known {
                hallucinations += 1;
            }
            decoded.push(event.message);
        }
        Ok(MessageOutcome {
            ok,
            hallucinations,
            exhausted: decoder.exhausted_decodes(),
            decoded,
        })
    }

    fn calibrate(&self, mode: ThresholdMode, probes: &[Vec<SlotExtrema>], cache: &mut ProbeCache) -> Result<Calibration> {
        let mut probe = |t: &ThresholdPair| -> Result<Vec<Message>> {
            if let Some(found) = cache.get(t) {
                return Ok(found.clone());
            }
            let outcomes: Vec<MessageOutcome> = probes
                .par_iter()
                .map(|ex| self.evaluate(ex, t))
                .collect::<Result<_>>()?;
            let found: Vec<Message> = outcomes.into_iter().flat_map(|o| o.decoded).collect();
            cache.insert(*t, found.clone());
            Ok(found)
        };
        calibrate_thresholds(&mut probe, &self.cfg.words, mode, &self.cfg.adc)
    }
}

type ProbeCache = HashMap<ThresholdPair, Vec<Message>>;

/// Calibration sweep recorded for one grid point and mode.
#[derive(Clone, Debug, PartialEq)]
pub struct PointCalibration {
    pub eb_nb_db: f64,
    pub mode: ThresholdMode,
    pub log: CalibrationLog,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRun {
    pub noise_rms_volts: f64,
    pub reference_ratio: f64,
    pub points: Vec<PerCurvePoint>,
    pub calibrations: Vec<PointCalibration>,
}

fn message_key(cfg: &ExperimentConfig, stream: u64, r: usize) -> u64 {
    sub_seed(sub_seed(cfg.master_seed, stream), r as u64)
}

/// Mean noise rms over the configured traces; zero for a quiet channel.
fn curve_noise_rms(cfg: &ExperimentConfig) -> Result<f64> {
    if cfg.noise.is_quiet() {
        return Ok(0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.master_seed, NOISE_RMS_STREAM));
    crate::noise::noise_rms(
        &cfg.noise,
        cfg.noise_rms_duration_s,
        cfg.timing.sample_rate_hz,
        cfg.noise_rms_traces,
        &mut rng,
    )
}

struct Gain {
    gain: f64,
    measured_db: f64,
}

fn solve_gain(cfg: &ExperimentConfig, snr_db: f64, noise_rms: f64, ratio: f64) -> Result<Gain> {
    let gain = match cfg.gain {
        GainPolicy::Fixed(g) => g,
        GainPolicy::MatchSnr => {
            if !(noise_rms > 0.0) {
                return param("noise rms is zero, so no gain matches an Eb/Nb; use a fixed gain");
            }
            noise_rms * cfg.convention.ratio_for(snr_db) / (cfg.shape.positive_peak_volts * ratio)
        }
    };
    let pulse = synthesize_pulse(&cfg.shape, cfg.timing.sample_rate_hz)?;
    let scaled = Waveform {
        samples: pulse.samples.iter().map(|v| v * gain).collect(),
        ..pulse
    };
    let measured_db = estimate_pulse_rms(&scaled, ratio, None)
        .and_then(|s| compute_eb_nb_db_with(s, noise_rms, cfg.convention))
        .unwrap_or(f64::NAN);
    Ok(Gain { gain, measured_db })
}

fn simulate_point(
    cfg: &ExperimentConfig,
    snr_db: f64,
    noise_rms: f64,
    ratio: f64,
) -> Result<(Vec<PerCurvePoint>, Vec<PointCalibration>)> {
    let Gain { gain, measured_db } = solve_gain(cfg, snr_db, noise_rms, ratio)?;
    let sim = PointSim::new(cfg, gain)?;

    let mut calibrations = Vec::new();
    let mut pairs = Vec::new();
    match cfg.thresholds {
        ThresholdSetting::Fixed { upper, lower } => {
            pairs.extend(cfg.modes.iter().map(|&m| Ok(pair_for(m, upper, lower))));
        }
        ThresholdSetting::Calibrate => {
            let probes: Vec<Vec<SlotExtrema>> = (0..cfg.probe_messages)
                .into_par_iter()
                .map(|r| sim.extrema(r, message_key(cfg, PROBE_STREAM, r)))
                .collect();
            let mut cache = ProbeCache::new();
            for &mode in &cfg.modes {
                let result = sim.calibrate(mode, &probes, &mut cache);
                let log = match &result {
                    Ok(c) => c.log.clone(),
                    Err(Error::Calibration { log }) => log.clone(),
                    Err(_) => CalibrationLog::default(),
                };
                calibrations.push(PointCalibration {
                    eb_nb_db: snr_db,
                    mode,
                    log,
                });
                pairs.push(result.map(|c| c.thresholds));
            }
        }
    }

    let active: Vec<ThresholdPair> = pairs.iter().filter_map(|p| p.as_ref().ok().copied()).collect();
    let outcomes: Vec<Vec<MessageOutcome>> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|r| {
            let ex = sim.extrema(r, message_key(cfg, MESSAGE_STREAM, r));
            active.iter().map(|t| sim.evaluate(&ex, t)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::new();
    let mut slot = 0;
    for (mode, pair) in cfg.modes.iter().zip(pairs) {
        let thresholds = match pair {
            Ok(t) => t,
            Err(e) => {
                let mut p = PerCurvePoint::failed(snr_db, *mode, &e);
                p.gain = gain;
                p.measured_eb_nb_db = measured_db;
                points.push(p);
                continue;
            }
        };
        let (mut ok, mut halluc, mut exhausted, mut complete) = (0u64, 0u64, 0u64, 0u64);
        for o in &outcomes {
            let o = &o[slot];
            let received = o.ok.iter().filter(|&&b| b).count() as u64;
            ok += received;
            halluc += o.hallucinations;
            exhausted += o.exhausted;
            complete += (received == o.ok.len() as u64) as u64;
        }
        slot += 1;
        let sent = (cfg.repetitions * cfg.words.len()) as u64;
        let mut p = PerCurvePoint::from_counts(snr_db, *mode, sent, ok);
        p.hallucinations = halluc;
        p.gain = gain;
        p.measured_eb_nb_db = measured_db;
        p.thresholds = Some(thresholds);
        p.messages_sent = cfg.repetitions as u64;
        p.messages_complete = complete;
        p.exhausted_decodes = exhausted;
        points.push(p);
    }
    Ok((points, calibrations))
}

/// One grid point in one threshold mode.
pub fn run_per_point(cfg: &ExperimentConfig, snr_db: f64, mode: ThresholdMode) -> Result<PerCurvePoint> {
    let cfg = ExperimentConfig {
        modes: vec![mode],
        snr_grid_db: vec![snr_db],
        ..cfg.clone()
    };
    cfg.validate()?;
    let ratio = measure_reference_ratio(&cfg.shape, &cfg.timing)?;
    let noise_rms = curve_noise_rms(&cfg)?;
    let (mut points, calibrations) = simulate_point(&cfg, snr_db, noise_rms, ratio)?;
    let point = points.remove(0);
    if matches!(cfg.thresholds, ThresholdSetting::Calibrate) && point.thresholds.is_none() {
        let log = calibrations.into_iter().next().map(|c| c.log).unwrap_or_default();
        return Err(Error::Calibration { log });
    }
    Ok(point)
}

/// Every grid point in every requested mode, in grid order then mode order.
/// A failing point is reported with its error and the run continues.
pub fn run_per_curve(cfg: &ExperimentConfig) -> Result<CurveRun> {
    cfg.validate()?;
    let ratio = measure_reference_ratio(&cfg.shape, &cfg.timing)?;
    let noise_rms = curve_noise_rms(cfg)?;
    let mut run = CurveRun {
        noise_rms_volts: noise_rms,
        reference_ratio: ratio,
        points: Vec::new(),
        calibrations: Vec::new(),
    };
    for &snr in &cfg.snr_grid_db {
        match simulate_point(cfg, snr, noise_rms, ratio) {
            Ok((points, calibrations)) => {
                run.points.extend(points);
                run.calibrations.extend(calibrations);
            }
            Err(e) => run
                .points
                .extend(cfg.modes.iter().map(|&m| PerCurvePoint::failed(snr, m, &e))),
        }
    }
    Ok(run)
}

/// The calibration sweep alone at one grid point.
pub fn calibrate_point(cfg: &ExperimentConfig, snr_db: f64, mode: ThresholdMode) -> Result<Calibration> {
    cfg.validate()?;
    let ratio = measure_reference_ratio(&cfg.shape, &cfg.timing)?;
    let noise_rms = curve_noise_rms(cfg)?;
    let Gain { gain, .. } = solve_gain(cfg, snr_db, noise_rms, ratio)?;
    let sim = PointSim::new(cfg, gain)?;
    let probes: Vec<Vec<SlotExtrema>> = (0..cfg.probe_messages)
        .into_par_iter()
        .map(|r| sim.extrema(r, message_key(cfg, PROBE_STREAM, r)))
        .collect();
    sim.calibrate(mode, &probes, &mut ProbeCache::new())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostPoint {
    pub density: f64,
    pub mean_node_expansions: f64,
    pub mean_messages: f64,
}

/// Mean exhaustive-decode cost over `trials` random packets per density.
/// Trial `t` reuses one uniform draw per slot across densities, so denser
/// packets are supersets of sparser ones.
pub fn decoder_cost_profile(
    params: &CodecParams,
    densities: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<CostPoint>> {
    if densities.iter().any(|d| !(0.0..=1.0).contains(d)) {
        return param("densities must lie in [0, 1]");
    }
    if trials == 0 {
        return param("trials must be positive");
    }
    let codec = Codec::new(*params)?;
    densities
        .iter()
        .map(|&density| {
            let (expansions, messages) = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, t as u64));
                    let packet = random_packet(params.packet_slots, density, &mut rng);
                    codec.decode_stats(&packet).map(|s| (s.node_expansions, s.messages))
                })
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .fold((0u64, 0u64), |a, b| (a.0 + b.0, a.1 + b.1));
            Ok(CostPoint {
                density,
                mean_node_expansions: expansions as f64 / trials as f64,
                mean_messages: messages as f64 / trials as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(reps: usize) -> ExperimentConfig {
        ExperimentConfig {
            noise: NoiseConfig::quiet(),
            gain: GainPolicy::Fixed(0.06),
            thresholds: ThresholdSetting::Fixed {
                upper: 2600,
                lower: 1400,
            },
            snr_grid_db: vec![10.0],
            repetitions: reps,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn zero_noise_has_no_errors() {
        let run = run_per_curve(&quiet(4)).unwrap();
        assert_eq!(run.points.len(), 2);
        for p in &run.points {
            assert_eq!(p.packets_sent, 32);
            assert_eq!(p.packets_ok, 32, "{p:?}");
            assert_eq!(p.per, 0.0);
            assert_eq!(p.hallucinations, 0);
            assert_eq!(p.messages_complete, 4);
        }
    }

    #[test]
    fn negative_offset_erases_every_mark() {
        let cfg = ExperimentConfig {
            noise: NoiseConfig {
                dc_offset_volts: -2.0,
                ..NoiseConfig::quiet()
            },
            gain: GainPolicy::Fixed(0.03),
            thresholds: ThresholdSetting::Fixed {
                upper: 2800,
                lower: 200,
            },
            ..quiet(3)
        };
        let run = run_per_curve(&cfg).unwrap();
        for p in &run.points {
            assert_eq!(p.per, 1.0, "{p:?}");
        }
    }

    #[test]
    fn zero_noise_calibrates() {
        let cfg = ExperimentConfig {
            thresholds: ThresholdSetting::Calibrate,
            gain: GainPolicy::Fixed(1.0),
            probe_messages: 2,
            modes: vec![ThresholdMode::Dual],
            ..quiet(1)
        };
        let c = calibrate_point(&cfg, 0.0, ThresholdMode::Dual).unwrap();
        assert!(c.thresholds.upper > 2000 && c.thresholds.upper <= 4000);
        let p = run_per_point(&cfg, 0.0, ThresholdMode::Dual).unwrap();
        assert_eq!(p.per, 0.0);
        let dead = ExperimentConfig {
            gain: GainPolicy::Fixed(0.0),
            ..cfg
        };
        assert!(matches!(
            calibrate_point(&dead, 0.0, ThresholdMode::Dual),
            Err(Error::Calibration { .. })
        ));
    }

    #[test]
    fn match_snr_without_noise_fails_the_point() {
        let cfg = ExperimentConfig {
            gain: GainPolicy::MatchSnr,
            ..quiet(1)
        };
        let run = run_per_curve(&cfg).unwrap();
        assert!(run.points.iter().all(|p| p.error.is_some() && p.per.is_nan()));
    }

    #[test]
    fn cost_profile_basics() {
        let params = CodecParams::new(8, 4, 64);
        let c = decoder_cost_profile(&params, &[0.0, 0.3, 0.6, 1.0], 50, 3).unwrap();
        assert_eq!(c[0].mean_node_expansions, 2.0);
        assert!(c.windows(2).all(|w| w[1].mean_node_expansions >= w[0].mean_node_expansions));
        assert_eq!(c[3].mean_messages, 256.0);
    }

    #[test]
    fn validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.snr_grid_db = vec![4.0, 4.0];
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            thresholds: ThresholdSetting::Fixed { upper: 1500, lower: 100 },
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
