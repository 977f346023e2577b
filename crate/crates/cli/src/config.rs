//! TOML run configuration. Every key is optional; absent keys take the
//! defaults shown by `mpp per-curve --dump-config`.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mpp_core::codec::{CodecParams, Message};
use mpp_core::detector::{AdcConfig, ThresholdMode};
use mpp_core::experiment::{EbNbConvention, ExperimentConfig, GainPolicy, SlotOffsetPolicy, ThresholdSetting};
use mpp_core::noise::{
    HarmonicNoiseConfig, ImpulseTrainConfig, LineReference, MiddletonParams, NoiseConfig, Polarity,
    LABORATORY_MIDDLETON_SIGMA,
};
use mpp_core::pulse::{PulseShape, SlotTiming};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfigFile {
    pub seed: u64,
    pub repetitions: usize,
    pub snr_grid_db: Vec<f64>,
    pub modes: Vec<ThresholdMode>,
    /// ASCII text, or hex when prefixed with `0x`.
    pub words: Vec<String>,
    pub inter_message_pause_s: f64,
    pub convention: EbNbConvention,
    pub decode_budget: u64,
    /// Slots during which a repeated message is suppressed; 0 means one packet.
    pub dedup_window: u64,
    pub codec: CodecParams,
    pub timing: SlotTiming,
    pub pulse: PulseShape,
    pub adc: AdcConfig,
    pub thresholds: ThresholdSection,
    pub slot_offset: SlotOffsetSection,
    pub gain: GainSection,
    pub noise_rms: NoiseRmsSection,
    pub noise: NoiseSection,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdPolicy {
    Calibrate,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ThresholdSection {
    pub policy: ThresholdPolicy,
    /// Used by the fixed policy.
    pub upper: u16,
    pub lower: u16,
    pub probe_messages: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetPolicy {
    Fixed,
    RandomPerMessage,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlotOffsetSection {
    pub policy: OffsetPolicy,
    pub offset_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GainMode {
    MatchSnr,
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainSection {
    pub policy: GainMode,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseRmsSection {
    pub traces: usize,
    pub duration_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSection {
    pub awgn_rms_volts: f64,
    pub dc_offset_volts: f64,
    pub line: LineReference,
    pub middleton: MiddletonSection,
    pub harmonics: HarmonicSection,
    pub line_locked: TrainSection,
    pub burst: TrainSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiddletonSection {
    pub enabled: bool,
    pub a: f64,
    pub gamma: f64,
    pub sigma_total: f64,
    pub terms: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarmonicSection {
    pub enabled: bool,
    pub fundamental_hz: f64,
    pub lowest_harmonic: u32,
    pub highest_harmonic: u32,
    pub total_peak_volts: f64,
    /// Radians, one per harmonic; empty selects quadratic phases.
    pub phases: Vec<f64>,
}

/// Impulse train keys. Unset keys fall back to the preset of the table they
/// appear in (`line_locked` or `burst`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub enabled: Option<bool>,
    pub pulse_rate_hz: Option<f64>,
    pub pulse_width_s: Option<f64>,
    pub amplitude_volts: Option<f64>,
    pub line_locked: Option<bool>,
    /// 0 disables burst gating.
    pub burst_on_s: Option<f64>,
    pub burst_gap_s: Option<f64>,
    pub polarity: Option<Polarity>,
}

impl Default for RunConfigFile {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        Self {
            seed: exp.master_seed,
            repetitions: exp.repetitions,
            snr_grid_db: exp.snr_grid_db,
            modes: exp.modes,
            words: mpp_core::experiment::DEFAULT_WORDS.iter().map(|w| w.to_string()).collect(),
            inter_message_pause_s: exp.inter_message_pause_s,
            convention: exp.convention,
            decode_budget: exp.decode_budget,
            dedup_window: 0,
            codec: exp.codec,
            timing: exp.timing,
            pulse: exp.shape,
            adc: exp.adc,
            thresholds: ThresholdSection::default(),
            slot_offset: SlotOffsetSection::default(),
            gain: GainSection::default(),
            noise_rms: NoiseRmsSection::default(),
            noise: NoiseSection::default(),
        }
    }
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            policy: ThresholdPolicy::Calibrate,
            upper: 3500,
            lower: 500,
            probe_messages: ExperimentConfig::default().probe_messages,
        }
    }
}

impl Default for SlotOffsetSection {
    fn default() -> Self {
        Self {
            policy: OffsetPolicy::Fixed,
            offset_s: 0.0,
        }
    }
}

impl Default for GainSection {
    fn default() -> Self {
        Self {
            policy: GainMode::MatchSnr,
            value: 1.0,
        }
    }
}

impl Default for NoiseRmsSection {
    fn default() -> Self {
        let exp = ExperimentConfig::default();
        Self {
            traces: exp.noise_rms_traces,
            duration_s: exp.noise_rms_duration_s,
        }
    }
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            awgn_rms_volts: 0.0,
            dc_offset_volts: 0.0,
            line: LineReference::default(),
            middleton: MiddletonSection::default(),
            harmonics: HarmonicSection::default(),
            line_locked: TrainSection::default().resolve(&ImpulseTrainConfig::line_locked()),
            burst: TrainSection::default().resolve(&ImpulseTrainConfig::asynchronous_burst()),
        }
    }
}

impl Default for MiddletonSection {
    fn default() -> Self {
        let p = MiddletonParams::default();
        Self {
            enabled: true,
            a: p.a,
            gamma: p.gamma,
            sigma_total: LABORATORY_MIDDLETON_SIGMA,
            terms: p.terms,
        }
    }
}

impl Default for HarmonicSection {
    fn default() -> Self {
        let h = HarmonicNoiseConfig::default();
        Self {
            enabled: true,
            fundamental_hz: h.fundamental_hz,
            lowest_harmonic: h.lowest_harmonic,
            highest_harmonic: h.highest_harmonic,
            total_peak_volts: h.total_peak_volts,
            phases: h.phases,
        }
    }
}

impl TrainSection {
    /// Every key filled in, taking unset ones from `preset`.
    pub fn resolve(&self, preset: &ImpulseTrainConfig) -> Self {
        Self {
            enabled: Some(self.enabled.unwrap_or(true)),
            pulse_rate_hz: Some(self.pulse_rate_hz.unwrap_or(preset.pulse_rate_hz)),
            pulse_width_s: Some(self.pulse_width_s.unwrap_or(preset.pulse_width_s)),
            amplitude_volts: Some(self.amplitude_volts.unwrap_or(preset.amplitude_volts)),
            line_locked: Some(self.line_locked.unwrap_or(preset.line_locked)),
            burst_on_s: Some(self.burst_on_s.or(preset.burst_on_s).unwrap_or(0.0)),
            burst_gap_s: Some(self.burst_gap_s.or(preset.burst_gap_s).unwrap_or(0.0)),
            polarity: Some(self.polarity.unwrap_or(preset.polarity)),
        }
    }

    fn train(&self, preset: &ImpulseTrainConfig) -> Option<ImpulseTrainConfig> {
        let r = self.resolve(preset);
        if !r.enabled? {
            return None;
        }
        let on = r.burst_on_s?;
        Some(ImpulseTrainConfig {
            pulse_rate_hz: r.pulse_rate_hz?,
            pulse_width_s: r.pulse_width_s?,
            amplitude_volts: r.amplitude_volts?,
            line_locked: r.line_locked?,
            burst_on_s: (on > 0.0).then_some(on),
            burst_gap_s: (on > 0.0).then_some(r.burst_gap_s?),
            polarity: r.polarity?,
        })
    }
}

impl NoiseSection {
    pub fn to_noise(&self) -> NoiseConfig {
        let m = &self.middleton;
        let h = &self.harmonics;
        NoiseConfig {
            middleton: m.enabled.then(|| MiddletonParams {
                a: m.a,
                gamma: m.gamma,
                sigma_total: m.sigma_total,
                terms: m.terms,
            }),
            harmonics: h.enabled.then(|| HarmonicNoiseConfig {
                fundamental_hz: h.fundamental_hz,
                lowest_harmonic: h.lowest_harmonic,
                highest_harmonic: h.highest_harmonic,
                total_peak_volts: h.total_peak_volts,
                phases: h.phases.clone(),
            }),
            impulse_trains: [
                self.line_locked.train(&ImpulseTrainConfig::line_locked()),
                self.burst.train(&ImpulseTrainConfig::asynchronous_burst()),
            ]
            .into_iter()
            .flatten()
            .collect(),
            awgn_rms_volts: self.awgn_rms_volts,
            dc_offset_volts: self.dc_offset_volts,
            line: self.line,
        }
    }

    fn resolved(&self) -> Self {
        Self {
            line_locked: self.line_locked.resolve(&ImpulseTrainConfig::line_locked()),
            burst: self.burst.resolve(&ImpulseTrainConfig::asynchronous_burst()),
            ..self.clone()
        }
    }
}

pub fn parse_word(text: &str, bits: usize) -> Result<Message> {
    let m = match text.strip_prefix("0x") {
        Some(hex) => Message::from_hex(hex, bits)?,
        None => Message::from_ascii(text)?,
    };
    if m.len() != bits {
        bail!("word {text:?} has {} bits, the codec expects {bits}", m.len());
    }
    Ok(m)
}

impl RunConfigFile {
    /// Parses TOML, rejecting the document if any key is unknown. The error
    /// lists every unknown key, not just the first.
    pub fn parse(text: &str) -> Result<Self> {
        let mut unknown = Vec::new();
        let de = toml::Deserializer::new(text);
        let cfg: Self = serde_ignored::deserialize(de, |path| unknown.push(path.to_string()))
            .map_err(|e| anyhow!("config: {e}"))?;
        if !unknown.is_empty() {
            bail!("config: unknown keys: {}", unknown.join(", "));
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text)
            }
        }
    }

    /// The same configuration with every default written out.
    pub fn resolved(&self) -> Self {
        Self {
            noise: self.noise.resolved(),
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(&self.resolved())?)
    }

    pub fn to_experiment(&self) -> Result<ExperimentConfig> {
        let words = self
            .words
            .iter()
            .map(|w| parse_word(w, self.codec.message_bits))
            .collect::<Result<Vec<_>>>()?;
        let cfg = ExperimentConfig {
            codec: self.codec,
            timing: self.timing,
            shape: self.pulse,
            noise: self.noise.to_noise(),
            adc: self.adc,
            words,
            inter_message_pause_s: self.inter_message_pause_s,
            thresholds: match self.thresholds.policy {
                ThresholdPolicy::Calibrate => ThresholdSetting::Calibrate,
                ThresholdPolicy::Fixed => ThresholdSetting::Fixed {
                    upper: self.thresholds.upper,
                    lower: self.thresholds.lower,
                },
            },
            modes: self.modes.clone(),
            snr_grid_db: self.snr_grid_db.clone(),
            repetitions: self.repetitions,
            master_seed: self.seed,
            slot_offset: match self.slot_offset.policy {
                OffsetPolicy::Fixed => SlotOffsetPolicy::Fixed(self.slot_offset.offset_s),
                OffsetPolicy::RandomPerMessage => SlotOffsetPolicy::RandomPerMessage,
            },
            gain: match self.gain.policy {
                GainMode::MatchSnr => GainPolicy::MatchSnr,
                GainMode::Fixed => GainPolicy::Fixed(self.gain.value),
            },
            convention: self.convention,
            noise_rms_traces: self.noise_rms.traces,
            noise_rms_duration_s: self.noise_rms.duration_s,
            probe_messages: self.thresholds.probe_messages,
            decode_budget: self.decode_budget,
            dedup_window: (self.dedup_window > 0).then_some(self.dedup_window),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_the_default() {
        let cfg = RunConfigFile::parse("").unwrap();
        assert_eq!(cfg, RunConfigFile::default());
        assert_eq!(cfg.to_experiment().unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn every_unknown_key_is_listed() {
        let err = RunConfigFile::parse("repetitons = 3\n[noise.middleton]\nenabeld = false\n[codec]\nk = 4\n")
            .unwrap_err()
            .to_string();
        for key in ["repetitons", "noise.middleton.enabeld", "codec.k"] {
            assert!(err.contains(key), "{err}");
        }
    }

    #[test]
    fn dump_round_trips() {
        let text = "seed = 9\n[noise.burst]\namplitude_volts = 1.5\n[noise.harmonics]\nenabled = false\n";
        let cfg = RunConfigFile::parse(text).unwrap();
        let dumped = RunConfigFile::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(dumped.to_experiment().unwrap(), cfg.to_experiment().unwrap());
        assert_eq!(dumped, cfg.resolved());
    }

    #[test]
    fn sections_switch_components() {
        let cfg = RunConfigFile::parse(
            "[noise.middleton]\nenabled = false\n[noise.line_locked]\nenabled = false\n[noise.burst]\nburst_on_s = 0\n",
        )
        .unwrap();
        let noise = cfg.to_experiment().unwrap().noise;
        assert!(noise.middleton.is_none() && noise.harmonics.is_some());
        assert_eq!(noise.impulse_trains.len(), 1);
        assert_eq!(noise.impulse_trains[0].burst_on_s, None);
        assert_eq!(noise.impulse_trains[0].amplitude_volts, 3.2);
    }
}
