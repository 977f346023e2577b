//! Rectangular impulse trains, either locked to the mains cycle or free
//! running with optional on/off burst gating.

use serde::{Deserialize, Serialize};

use crate::codec::sub_seed;
use crate::error::{param, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    #[default]
    FixedPositive,
    Alternating,
    Random,
}

/// Mains timing that line-locked trains follow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineReference {
    pub frequency_hz: f64,
    /// Absolute time of a line-cycle start.
    pub phase_ref_s: f64,
}

impl Default for LineReference {
    fn default() -> Self {
        Self {
            frequency_hz: 60.0,
            phase_ref_s: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpulseTrainConfig {
    pub pulse_rate_hz: f64,
    pub pulse_width_s: f64,
    pub amplitude_volts: f64,
    pub line_locked: bool,
    pub burst_on_s: Option<f64>,
    pub burst_gap_s: Option<f64>,
    pub polarity: Polarity,
}

impl Default for ImpulseTrainConfig {
    fn default() -> Self {
        Self::line_locked()
    }
}

impl ImpulseTrainConfig {
    /// 7 kHz, 1 µs, 2.2 V pulses restarted every line cycle.
    pub fn line_locked() -> Self {
        Self {
            pulse_rate_hz: 7.0e3,
            pulse_width_s: 1.0e-6,
            amplitude_volts: 2.2,
            line_locked: true,
            burst_on_s: None,
            burst_gap_s: None,
            polarity: Polarity::FixedPositive,
        }
    }

    /// Free-running 10 kHz, 0.5 µs, 3.2 V pulses in 11 ms bursts separated by
    /// 25 ms gaps.
    pub fn asynchronous_burst() -> Self {
        Self {
            pulse_rate_hz: 1.0e4,
            pulse_width_s: 0.5e-6,
            amplitude_volts: 3.2,
            line_locked: false,
            burst_on_s: Some(11e-3),
            burst_gap_s: Some(25e-3),
            polarity: Polarity::FixedPositive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_rate_hz > 0.0 && self.pulse_width_s > 0.0 && self.amplitude_volts >= 0.0) {
            return param("impulse rate and width must be positive, amplitude non-negative");
        }
        if self.pulse_width_s >= 1.0 / self.pulse_rate_hz {
            return param("impulse width must be shorter than the pulse period");
        }
        match (self.burst_on_s, self.burst_gap_s) {
            (None, None) => {}
            (Some(on), Some(gap)) if on > 0.0 && gap >= 0.0 => {}
            _ => return param("burst_on_s and burst_gap_s must both be set, with on > 0"),
        }
        Ok(())
    }

    pub fn burst_period_s(&self) -> Option<f64> {
        Some(self.burst_on_s? + self.burst_gap_s?)
    }
}

fn unit_interval(bits: u64) -> f64 {
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

/// Start time and global index of every pulse beginning in `[t0, t1)`.
fn pulse_starts(
    cfg: &ImpulseTrainConfig,
    key: u64,
    line: &LineReference,
    t0: f64,
    t1: f64,
) -> Vec<(f64, i64)> {
    let spacing = 1.0 / cfg.pulse_rate_hz;
    let mut out = Vec::new();
    let mut push_group = |origin: f64, group: i64, period: f64, per_group: i64| {
        for j in 0..per_group {
            let t = origin + j as f64 * spacing;
            if t >= t0 && t < t1 {
                out.push((t, group * per_group + j));
            }
        }
        let _ = period;
    };

    if cfg.line_locked {
        let period = 1.0 / line.frequency_hz;
        let per_cycle = ((period - cfg.pulse_width_s) * cfg.pulse_rate_hz + 1e-9).floor() as i64 + 1;
        let first = ((t0 - line.phase_ref_s) / period).floor() as i64 - 1;
        let last = ((t1 - line.phase_ref_s) / period).floor() as i64;
        for c in first..=last {
            push_group(line.phase_ref_s + c as f64 * period, c, period, per_cycle);
        }
    } else if let (Some(on), Some(period)) = (cfg.burst_on_s, cfg.burst_period_s()) {
        let phase = unit_interval(sub_seed(key, 0)) * period;
        let per_burst = ((on * cfg.pulse_rate_hz) - 1e-9).ceil().max(1.0) as i64;
        let first = ((t0 - phase) / period).floor() as i64 - 1;
        let last = ((t1 - phase) / period).floor() as i64;
        for q in first..=last {
            push_group(phase + q as f64 * period, q, period, per_burst);
        }
    } else {
        let phase = unit_interval(sub_seed(key, 0)) * spacing;
        let first = ((t0 - phase) * cfg.pulse_rate_hz).floor() as i64 - 1;
        let last = ((t1 - phase) * cfg.pulse_rate_hz).ceil() as i64;
        for j in first..=last {
            let t = phase + j as f64 * spacing;
            if t >= t0 && t < t1 {
                out.push((t, j));
            }
        }
    }
    out
}

fn pulse_sign(cfg: &ImpulseTrainConfig, key: u64, index: i64) -> f64 {
    match cfg.polarity {
        Polarity::FixedPositive => 1.0,
        Polarity::Alternating => {
            if index.rem_euclid(2) == 0 {
                1.0
            } else {
                -1.0
            }
        }
        Polarity::Random => {
            if sub_seed(key, (index as u64).wrapping_add(1)) & 1 == 0 {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// Index of the first sample at or after `t`, forgiving rounding noise.
fn first_sample(t: f64, rate_hz: f64) -> i64 {
    (t * rate_hz - 1e-6).ceil() as i64
}

/// Adds the train to `out`, whose sample 0 sits at absolute sample index
/// `start_index` of a lattice with rate `rate_hz`.
pub fn add_impulse_train(
    out: &mut [f64],
    start_index: i64,
    rate_hz: f64,
    cfg: &ImpulseTrainConfig,
    key: u64,
    line: &LineReference,
) {
    let t0 = start_index as f64 / rate_hz;
    let t1 = (start_index + out.len() as i64) as f64 / rate_hz;
    let len = out.len() as i64;
    for (t, index) in pulse_starts(cfg, key, line, t0 - cfg.pulse_width_s, t1) {
        let v = cfg.amplitude_volts * pulse_sign(cfg, key, index);
        let a = (first_sample(t, rate_hz) - start_index).max(0);
        let b = (first_sample(t + cfg.pulse_width_s, rate_hz) - start_index).min(len);
        for i in a..b {
            out[i as usize] += v;
        }
    }
}

/// Burst-gate windows `[start, end)` intersecting `[t0, t1)` for a gated train.
pub fn burst_windows(cfg: &ImpulseTrainConfig, key: u64, t0: f64, t1: f64) -> Vec<(f64, f64)> {
    let (Some(on), Some(period)) = (cfg.burst_on_s, cfg.burst_period_s()) else {
        return vec![(t0, t1)];
    };
    let phase = unit_interval(sub_seed(key, 0)) * period;
    let first = ((t0 - phase) / period).floor() as i64 - 1;
    let last = ((t1 - phase) / period).floor() as i64;
    (first..=last)
        .map(|q| phase + q as f64 * period)
        .map(|s| (s.max(t0), (s + on).min(t1)))
        .filter(|(a, b)| b > a)
        .collect()
}
