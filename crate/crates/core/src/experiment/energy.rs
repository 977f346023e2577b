use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::codec::CodecParams;
use crate::error::{param, Error, Result};
use crate::pulse::{synthesize_pulse, PulseShape, SlotTiming};
use crate::waveform::{rms, snap, Waveform};

/// How a voltage ratio becomes decibels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EbNbConvention {
    /// `20·log10(V_s / V_n)`: the energy ratio in dB.
    #[default]
    Energy,
    /// `10·log10(V_s / V_n)`: the voltage ratio taken directly as the energy ratio.
    VoltageRatio,
}

impl EbNbConvention {
    pub fn factor(&self) -> f64 {
        match self {
            Self::Energy => 20.0,
            Self::VoltageRatio => 10.0,
        }
    }

    /// Voltage ratio giving `db`.
    pub fn ratio_for(&self, db: f64) -> f64 {
        10f64.powf(db / self.factor())
    }
}

pub fn compute_eb_nb_db(signal_rms: f64, noise_rms: f64) -> Result<f64> {
    compute_eb_nb_db_with(signal_rms, noise_rms, EbNbConvention::Energy)
}

pub fn compute_eb_nb_db_with(signal_rms: f64, noise_rms: f64, convention: EbNbConvention) -> Result<f64> {
    if !(signal_rms > 0.0 && noise_rms > 0.0) {
        return param("signal and noise rms must both be positive");
    }
    Ok(convention.factor() * (signal_rms / noise_rms).log10())
}

/// Bit period bookkeeping. Noise energy per bit is `N_b = N_0·W·B`; only the
/// ratio of rms voltages enters the computation, so `W` and `N_0` are carried
/// for reference.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitTiming {
    pub slots_per_info_bit: f64,
    pub bit_period_s: f64,
    pub detector_bandwidth_hz: f64,
    pub n0_units: String,
}

impl BitTiming {
    pub fn new(codec: &CodecParams, timing: &SlotTiming, detector_bandwidth_hz: f64) -> Self {
        let slots_per_info_bit = codec.packet_slots as f64 / codec.message_bits as f64;
        Self {
            slots_per_info_bit,
            bit_period_s: slots_per_info_bit * timing.slot_duration_s,
            detector_bandwidth_hz,
            n0_units: "N_b = N_0 * W * B".to_string(),
        }
    }

    pub fn bandwidth_time_product(&self) -> f64 {
        self.detector_bandwidth_hz * self.bit_period_s
    }
}

/// rms over one slot divided by the positive peak, for a clean pulse.
pub fn measure_reference_ratio(shape: &PulseShape, timing: &SlotTiming) -> Result<f64> {
    timing.validate()?;
    let pulse = synthesize_pulse(shape, timing.sample_rate_hz)?;
    let slot_len = snap(timing.slot_duration_s, timing.sample_rate_hz);
    let mut slot = vec![0.0; slot_len.max(pulse.len())];
    slot[..pulse.len()].copy_from_slice(&pulse.samples);
    rms_to_peak_ratio(&slot[..slot_len])
}

/// rms divided by the positive peak of one slot of samples.
pub fn rms_to_peak_ratio(slot: &[f64]) -> Result<f64> {
    let peak = slot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Measurement("slot has no positive peak".into()));
    }
    Ok(rms(slot) / peak)
}

/// How far the trace maximum must stand above the rms of everything more than
/// [`PEAK_GUARD_S`] away from it to count as a located pulse.
pub const PEAK_FLOOR_FACTOR: f64 = 3.0;
pub const PEAK_GUARD_S: f64 = 5e-6;

/// Pulse rms as `max × reference_peak_to_rms`. With a `window` (sample
/// range) the maximum is taken only inside it; without one the peak has to
/// clear the surrounding noise.
pub fn estimate_pulse_rms(
    trace: &Waveform,
    reference_peak_to_rms: f64,
    window: Option<Range<usize>>,
) -> Result<f64> {
    let s = &trace.samples;
    let range = window.unwrap_or(0..s.len());
    if range.start >= range.end || range.end > s.len() {
        return param("cursor window must be a non-empty range inside the trace");
    }
    let (idx, peak) = s[range.clone()]
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, &v)| if v > a.1 { (i, v) } else { a });
    let idx = idx + range.start;
    if !(peak > 0.0) {
        return Err(Error::Measurement("no positive peak in the trace".into()));
    }
    if range.len() == s.len() {
        let guard = (PEAK_GUARD_S * trace.sample_rate_hz).ceil() as usize;
        let outside: Vec<f64> = s
            .iter()
            .enumerate()
            .filter(|(i, _)| i.abs_diff(idx) > guard)
            .map(|(_, &v)| v)
            .collect();
        if !outside.is_empty() && peak < PEAK_FLOOR_FACTOR * rms(&outside) {
            return Err(Error::Measurement(
                "pulse peak does not clear the noise; supply a cursor window".into(),
            ));
        }
    }
    Ok(peak * reference_peak_to_rms)
}
