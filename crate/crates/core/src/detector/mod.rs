//! ADC quantization, per-slot mark decisions, sliding-window decoding and
//! empirical threshold calibration.

mod calibrate;
mod sliding;

pub use calibrate::{
    calibrate_thresholds, Calibration, CalibrationLog, CalibrationRow, ProbeChannel, THRESHOLD_STEP,
};
pub use sliding::{sliding_decode, DetectionEvent, SlidingDecoder, DEFAULT_DECODE_BUDGET};

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::pulse::SlotTiming;
use crate::waveform::{snap, Waveform};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdcConfig {
    pub full_scale_low_volts: f64,
    pub full_scale_high_volts: f64,
    pub max_count: u16,
}

impl Default for AdcConfig {
    fn default() -> Self {
        Self {
            full_scale_low_volts: -4.0,
            full_scale_high_volts: 4.0,
            max_count: 4000,
        }
    }
}

impl AdcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.full_scale_high_volts > self.full_scale_low_volts) || self.max_count == 0 {
            return param("ADC needs high > low and a positive max_count");
        }
        Ok(())
    }

    pub fn mid_count(&self) -> u16 {
        self.count(0.5 * (self.full_scale_low_volts + self.full_scale_high_volts))
    }

    /// Count for one voltage. Rounds half away from zero, then clamps.
    #[inline]
    pub fn count(&self, volts: f64) -> u16 {
        let span = self.full_scale_high_volts - self.full_scale_low_volts;
        let x = ((volts - self.full_scale_low_volts) / span * self.max_count as f64).round();
        if x.is_nan() {
            return 0;
        }
        x.clamp(0.0, self.max_count as f64) as u16
    }
}

pub fn digitize(waveform: &Waveform, adc: &AdcConfig) -> Vec<u16> {
    waveform.samples.iter().map(|&v| adc.count(v)).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Single,
    Dual,
}

impl ThresholdMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Dual => "dual",
        }
    }
}

impl std::fmt::Display for ThresholdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ThresholdMode {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(Self::Single),
            "dual" => Ok(Self::Dual),
            _ => param(format!("unknown threshold mode {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThresholdPair {
    pub upper: u16,
    pub lower: u16,
    pub mode: ThresholdMode,
}

impl ThresholdPair {
    pub fn single(upper: u16) -> Self {
        Self {
            upper,
            lower: 0,
            mode: ThresholdMode::Single,
        }
    }

    pub fn dual(upper: u16, lower: u16) -> Self {
        Self {
            upper,
            lower,
            mode: ThresholdMode::Dual,
        }
    }

    pub fn validate(&self, adc: &AdcConfig) -> Result<()> {
        if self.upper > adc.max_count || self.lower > adc.max_count {
            return param(format!("thresholds must lie in [0, {}]", adc.max_count));
        }
        let mid = adc.mid_count();
        if self.mode == ThresholdMode::Dual && !(self.lower < mid && mid < self.upper) {
            return param(format!("dual thresholds need lower < {mid} < upper"));
        }
        Ok(())
    }

    #[inline]
    pub fn is_mark(&self, max_count: u16, min_count: u16) -> bool {
        max_count > self.upper || (self.mode == ThresholdMode::Dual && min_count < self.lower)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotDecision {
    pub slot_index: u64,
    pub mark: bool,
    pub max_count: u16,
    pub min_count: u16,
}

/// Count extremes inside one slot window.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotExtrema {
    pub max_count: u16,
    pub min_count: u16,
}

impl SlotExtrema {
    pub fn of(counts: &[u16]) -> Self {
        let (mut max_count, mut min_count) = (u16::MIN, u16::MAX);
        for &c in counts {
            max_count = max_count.max(c);
            min_count = min_count.min(c);
        }
        Self {
            max_count,
            min_count,
        }
    }

    pub fn decide(&self, slot_index: u64, thresholds: &ThresholdPair) -> SlotDecision {
        SlotDecision {
            slot_index,
            mark: thresholds.is_mark(self.max_count, self.min_count),
            max_count: self.max_count,
            min_count: self.min_count,
        }
    }
}

pub fn decide_slot(counts: &[u16], thresholds: &ThresholdPair) -> Result<SlotDecision> {
    if counts.is_empty() {
        return param("a slot must contain at least one count");
    }
    Ok(SlotExtrema::of(counts).decide(0, thresholds))
}

/// Sample ranges of consecutive slots starting `offset_s` into a stream of
/// `len` samples. Only whole slots are returned.
pub fn slot_windows(len: usize, timing: &SlotTiming, offset_s: f64) -> Vec<(usize, usize)> {
    let fs = timing.sample_rate_hz;
    let mut out = Vec::new();
    for i in 0.. {
        let a = snap(offset_s + i as f64 * timing.slot_duration_s, fs);
        let b = snap(offset_s + (i + 1) as f64 * timing.slot_duration_s, fs);
        if b > len || b <= a {
            break;
        }
        out.push((a, b));
    }
    out
}

pub fn slot_extrema(counts: &[u16], timing: &SlotTiming, offset_s: f64) -> Vec<SlotExtrema> {
    slot_windows(counts.len(), timing, offset_s)
        .into_iter()
        .map(|(a, b)| SlotExtrema::of(&counts[a..b]))
        .collect()
}

/// Slot extremes straight from voltages. Quantization is monotone, so this
/// equals digitizing first and taking count extremes.
pub fn slot_extrema_from_volts(
    samples: &[f64],
    timing: &SlotTiming,
    offset_s: f64,
    adc: &AdcConfig,
) -> Vec<SlotExtrema> {
    slot_windows(samples.len(), timing, offset_s)
        .into_iter()
        .map(|(a, b)| {
            let (mut hi, mut lo) = (f64::NEG_INFINITY, f64::INFINITY);
            for &v in &samples[a..b] {
                hi = hi.max(v);
                lo = lo.min(v);
            }
            SlotExtrema {
                max_count: adc.count(hi),
                min_count: adc.count(lo),
            }
        })
        .collect()
}

pub fn slot_stream(
    counts: &[u16],
    timing: &SlotTiming,
    offset_s: f64,
    thresholds: &ThresholdPair,
) -> Result<Vec<SlotDecision>> {
    timing.validate()?;
    let extrema = slot_extrema(counts, timing, offset_s);
    if extrema.is_empty() {
        return param("count stream is shorter than one slot");
    }
    Ok(extrema
        .iter()
        .enumerate()
        .map(|(i, e)| e.decide(i as u64, thresholds))
        .collect())
}

pub fn write_decisions_csv<W: Write>(decisions: &[SlotDecision], mut out: W) -> Result<()> {
    writeln!(out, "slot_index,mark,max_count,min_count")?;
    for d in decisions {
        writeln!(out, "{},{},{},{}", d.slot_index, d.mark as u8, d.max_count, d.min_count)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{encode, CodecParams, Message};
    use crate::pulse::{modulate, PulseShape};

    #[test]
    fn adc_anchors() {
        let adc = AdcConfig::default();
        assert_eq!(adc.count(-4.0), 0);
        assert_eq!(adc.count(0.0), 2000);
        assert_eq!(adc.count(4.0), 4000);
        assert_eq!(adc.count(10.0), 4000);
        assert_eq!(adc.count(-10.0), 0);
        assert_eq!(adc.count(0.001), 2001);
        assert_eq!(adc.mid_count(), 2000);
    }

    #[test]
    fn threshold_rules() {
        let dual = ThresholdPair::dual(3500, 500);
        assert!(decide_slot(&[2000, 3900], &dual).unwrap().mark);
        assert!(decide_slot(&[3000, 100], &dual).unwrap().mark);
        assert!(!decide_slot(&[3000, 100], &ThresholdPair::single(3500)).unwrap().mark);
        assert!(decide_slot(&[], &dual).is_err());
        let adc = AdcConfig::default();
        assert!(dual.validate(&adc).is_ok());
        assert!(ThresholdPair::dual(1900, 500).validate(&adc).is_err());
        assert!(ThresholdPair::single(1900).validate(&adc).is_ok());
    }

    fn clean_counts(message: u64) -> (Vec<u16>, crate::codec::Packet) {
        let params = CodecParams::default();
        let packet = encode(&Message::from_u64(message, 64), &params).unwrap();
        let mut w = modulate(&packet, &SlotTiming::default(), &PulseShape::default()).unwrap();
        w.samples.iter_mut().for_each(|v| *v *= 0.06);
        (digitize(&w, &AdcConfig::default()), packet)
    }

    #[test]
    fn loopback() {
        let (counts, packet) = clean_counts(0x0123_4567_89ab_cdef);
        let timing = SlotTiming::default();
        let d = slot_stream(&counts, &timing, 0.0, &ThresholdPair::single(2600)).unwrap();
        assert_eq!(d.len(), 256);
        for (i, s) in d.iter().enumerate() {
            assert_eq!(s.mark, packet.get(i), "slot {i}");
        }
        let zeros = vec![2000u16; counts.len()];
        let d = slot_stream(&zeros, &timing, 0.0, &ThresholdPair::dual(2600, 1400)).unwrap();
        assert!(d.iter().all(|s| !s.mark));
    }

    #[test]
    fn half_slot_offset() {
        let (counts, packet) = clean_counts(42);
        let timing = SlotTiming::default();
        let d = slot_stream(&counts, &timing, 0.5 * timing.slot_duration_s, &ThresholdPair::single(2600)).unwrap();
        assert_eq!(d.len(), 255);
        for slot in packet.marks() {
            let hit = (slot > 0 && d[slot - 1].mark) || d.get(slot).is_some_and(|s| s.mark);
            assert!(hit, "slot {slot}");
        }
    }

    #[test]
    fn volts_shortcut_matches_counts() {
        let adc = AdcConfig::default();
        let timing = SlotTiming::default();
        let samples: Vec<f64> = (0..20_000).map(|i| 6.0 * ((i as f64) * 0.0137).sin()).collect();
        let w = Waveform::new(samples.clone(), timing.sample_rate_hz, 0.0).unwrap();
        let counts = digitize(&w, &adc);
        assert_eq!(
            slot_extrema(&counts, &timing, 1.3e-6),
            slot_extrema_from_volts(&samples, &timing, 1.3e-6, &adc)
        );
    }
}
