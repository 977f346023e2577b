//! Pulse synthesis and packet modulation.
//!
//! The transmitted pulse is modelled as a damped sinusoid
//! `sin(2πft)·exp(−t/τ)`, scaled so its positive peak hits
//! `positive_peak_volts`, with every negative sample then multiplied by one
//! factor so the first negative lobe reaches `−negative_peak_volts`. Extremum
//! positions are solved analytically, so the peak values do not depend on the
//! sample rate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::codec::Packet;
use crate::error::{param, Result};
use crate::waveform::{snap, Waveform};

/// Minimum samples per pulse and per slot.
pub const MIN_SAMPLES_PER_SLOT: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PulseShape {
    pub positive_peak_volts: f64,
    /// Magnitude of the negative peak.
    pub negative_peak_volts: f64,
    pub ring_frequency_hz: f64,
    pub decay_time_s: f64,
    pub duration_s: f64,
}

impl Default for PulseShape {
    fn default() -> Self {
        Self {
            positive_peak_volts: 50.0,
            negative_peak_volts: 40.0,
            ring_frequency_hz: 5.0e5,
            decay_time_s: 1.2e-6,
            duration_s: 3.9e-6,
        }
    }
}

impl PulseShape {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.positive_peak_volts,
            self.negative_peak_volts,
            self.ring_frequency_hz,
            self.decay_time_s,
            self.duration_s,
        ];
        if fields.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return param("pulse shape fields must be positive and finite");
        }
        if self.duration_s * self.ring_frequency_hz < 1.0 - 1e-9 {
            return param("pulse duration must cover at least one ring period");
        }
        Ok(())
    }

    /// Time and unit-amplitude value of the first positive extremum.
    fn first_peak(&self) -> (f64, f64) {
        let omega = 2.0 * PI * self.ring_frequency_hz;
        let t = (omega * self.decay_time_s).atan() / omega;
        (t, (omega * t).sin() * (-t / self.decay_time_s).exp())
    }

    fn unit(&self, t: f64) -> f64 {
        (2.0 * PI * self.ring_frequency_hz * t).sin() * (-t / self.decay_time_s).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SlotTiming {
    pub slot_duration_s: f64,
    pub slots_per_packet: usize,
    pub sample_rate_hz: f64,
}

impl Default for SlotTiming {
    fn default() -> Self {
        Self {
            slot_duration_s: 3.9e-6,
            slots_per_packet: 256,
            sample_rate_hz: 4.1e7,
        }
    }
}

impl SlotTiming {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_duration_s > 0.0 && self.sample_rate_hz > 0.0) {
            return param("slot duration and sample rate must be positive");
        }
        if self.slots_per_packet < 2 {
            return param("slots_per_packet must be at least 2");
        }
        if self.sample_rate_hz * self.slot_duration_s < MIN_SAMPLES_PER_SLOT {
            return param(format!(
                "sample rate gives fewer than {MIN_SAMPLES_PER_SLOT} samples per slot"
            ));
        }
        Ok(())
    }

    pub fn packet_duration_s(&self) -> f64 {
        self.slots_per_packet as f64 * self.slot_duration_s
    }

    /// First sample of slot `i`, counted from the packet start.
    pub fn slot_start(&self, i: usize) -> usize {
        snap(i as f64 * self.slot_duration_s, self.sample_rate_hz)
    }

    pub fn packet_samples(&self) -> usize {
        self.slot_start(self.slots_per_packet)
    }
}

/// A sequence of packets sent back to back, then a silent pause, repeated.
#[derive(Clone, Debug, PartialEq)]
pub struct TransmissionPlan {
    pub packets: Vec<Packet>,
    pub inter_message_pause_s: f64,
    pub repetitions: usize,
}

impl TransmissionPlan {
    pub fn message_duration_s(&self, timing: &SlotTiming) -> f64 {
        self.packets.len() as f64 * timing.packet_duration_s()
    }
}

pub fn synthesize_pulse(shape: &PulseShape, sample_rate_hz: f64) -> Result<Waveform> {
    shape.validate()?;
    if !(sample_rate_hz * shape.duration_s >= MIN_SAMPLES_PER_SLOT) {
        return param(format!(
            "sample rate {sample_rate_hz} Hz undersamples a {} s pulse",
            shape.duration_s
        ));
    }
    let (t_peak, unit_peak) = shape.first_peak();
    let scale = shape.positive_peak_volts / unit_peak;
    let t_trough = t_peak + 0.5 / shape.ring_frequency_hz;
    let unit_trough = shape.unit(t_trough).abs();
    let negative_gain = shape.negative_peak_volts / (scale * unit_trough);

    let len = snap(shape.duration_s, sample_rate_hz);
    let samples = (0..len)
        .map(|j| {
            let v = scale * shape.unit(j as f64 / sample_rate_hz);
            if v < 0.0 {
                v * negative_gain
            } else {
                v
            }
        })
        .collect();
    Waveform::new(samples, sample_rate_hz, 0.0)
}

fn check_fits(timing: &SlotTiming, shape: &PulseShape) -> Result<()> {
    timing.validate()?;
    if shape.duration_s > timing.slot_duration_s * (1.0 + 1e-12) {
        return param(format!(
            "pulse duration {} s exceeds slot duration {} s",
            shape.duration_s, timing.slot_duration_s
        ));
    }
    Ok(())
}

/// Writes the modulated packet into `out`, which must hold
/// `timing.packet_samples()` samples.
fn modulate_into(packet: &Packet, timing: &SlotTiming, pulse: &[f64], out: &mut [f64]) {
    for slot in packet.marks() {
        let start = timing.slot_start(slot);
        out[start..start + pulse.len()].copy_from_slice(pulse);
    }
}

pub fn modulate(packet: &Packet, timing: &SlotTiming, shape: &PulseShape) -> Result<Waveform> {
    check_fits(timing, shape)?;
    if packet.len() != timing.slots_per_packet {
        return param(format!(
            "packet has {} slots, timing expects {}",
            packet.len(),
            timing.slots_per_packet
        ));
    }
    let pulse = synthesize_pulse(shape, timing.sample_rate_hz)?;
    let mut samples = vec![0.0; timing.packet_samples()];
    modulate_into(packet, timing, &pulse.samples, &mut samples);
    Waveform::new(samples, timing.sample_rate_hz, 0.0)
}

/// Packets back to back on one unbroken slot grid: pulse `j` of the stream
/// starts at `slot_start(j)`, so slot boundaries never drift against a
/// receiver counting slots from the first sample.
pub fn modulate_contiguous(packets: &[Packet], timing: &SlotTiming, shape: &PulseShape) -> Result<Waveform> {
    check_fits(timing, shape)?;
    if packets.is_empty() || packets.iter().any(|p| p.len() != timing.slots_per_packet) {
        return param("every packet must match the slot timing");
    }
    let pulse = synthesize_pulse(shape, timing.sample_rate_hz)?;
    let n = timing.slots_per_packet;
    let total = packets.len() * n;
    let mut samples = vec![0.0; timing.slot_start(total).max(timing.slot_start(total - 1) + pulse.len())];
    for (p, packet) in packets.iter().enumerate() {
        for slot in packet.marks() {
            let start = timing.slot_start(p * n + slot);
            samples[start..start + pulse.len()].copy_from_slice(&pulse.samples);
        }
    }
    Waveform::new(samples, timing.sample_rate_hz, 0.0)
}

/// Modulated packets back to back, then `inter_message_pause_s` of silence,
/// repeated `plan.repetitions` times. Each segment length is floored to whole
/// samples, so the total is an exact function of the plan.
pub fn build_transmission(
    plan: &TransmissionPlan,
    timing: &SlotTiming,
    shape: &PulseShape,
) -> Result<Waveform> {
    if plan.packets.is_empty() || plan.repetitions == 0 {
        return param("transmission plan must contain packets and at least one repetition");
    }
    if !(plan.inter_message_pause_s >= 0.0) {
        return param("pause must be non-negative");
    }
    check_fits(timing, shape)?;
    if plan.packets.iter().any(|p| p.len() != timing.slots_per_packet) {
        return param("every packet must match the slot timing");
    }
    let pulse = synthesize_pulse(shape, timing.sample_rate_hz)?;
    let packet_len = timing.packet_samples();
    let pause_len = snap(plan.inter_message_pause_s, timing.sample_rate_hz);
    let message_len = packet_len * plan.packets.len() + pause_len;
    let mut samples = vec![0.0; message_len * plan.repetitions];
    for rep in 0..plan.repetitions {
        for (p, packet) in plan.packets.iter().enumerate() {
            let start = rep * message_len + p * packet_len;
            modulate_into(
                packet,
                timing,
                &pulse.samples,
                &mut samples[start..start + packet_len],
            );
        }
    }
    Waveform::new(samples, timing.sample_rate_hz, 0.0)
}

pub fn scale_signal(waveform: &Waveform, gain: f64) -> Result<Waveform> {
    if !(gain >= 0.0 && gain.is_finite()) {
        return param("gain must be non-negative and finite");
    }
    Ok(Waveform {
        samples: waveform.samples.iter().map(|v| v * gain).collect(),
        ..waveform.clone()
    })
}
