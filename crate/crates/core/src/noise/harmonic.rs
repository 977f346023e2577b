//! Line-locked harmonic noise: equal-amplitude harmonics of the mains
//! frequency, scaled so the peak magnitude over a line cycle equals
//! `total_peak_volts`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

const SCAN_POINTS: usize = 1 << 16;
const TABLE_SIZE: usize = 1 << 17;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarmonicNoiseConfig {
    pub fundamental_hz: f64,
    pub lowest_harmonic: u32,
    pub highest_harmonic: u32,
    pub total_peak_volts: f64,
    /// Phase of each harmonic, lowest first. Empty selects
    /// [`HarmonicNoiseConfig::default_phases`].
    pub phases: Vec<f64>,
}

impl Default for HarmonicNoiseConfig {
    fn default() -> Self {
        Self {
            fundamental_hz: 60.0,
            lowest_harmonic: 3,
            highest_harmonic: 16,
            total_peak_volts: 1.6,
            phases: Vec::new(),
        }
    }
}

impl HarmonicNoiseConfig {
    pub fn count(&self) -> usize {
        (self.highest_harmonic - self.lowest_harmonic + 1) as usize
    }

    /// Quadratic (Schroeder) phases `π·j(j+1)/N`, which keep the crest factor
    /// of the sum low.
    pub fn default_phases(&self) -> Vec<f64> {
        let n = self.count() as f64;
        (0..self.count())
            .map(|j| PI * (j * (j + 1)) as f64 / n)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fundamental_hz > 0.0 && self.total_peak_volts >= 0.0) {
            return param("harmonic fundamental must be positive and peak non-negative");
        }
        if self.lowest_harmonic < 1 || self.highest_harmonic < self.lowest_harmonic {
            return param("harmonic range must satisfy 1 <= lowest <= highest");
        }
        if !self.phases.is_empty() && self.phases.len() != self.count() {
            return param(format!(
                "expected {} harmonic phases, got {}",
                self.count(),
                self.phases.len()
            ));
        }
        Ok(())
    }
}

/// Evaluator with the peak scale resolved and a one-cycle lookup table.
#[derive(Clone, Debug)]
pub struct HarmonicNoise {
    fundamental_hz: f64,
    harmonics: Vec<(f64, f64)>,
    scale: f64,
    table: Vec<f64>,
}

impl HarmonicNoise {
    pub fn new(cfg: &HarmonicNoiseConfig) -> Result<Self> {
        cfg.validate()?;
        let phases = if cfg.phases.is_empty() {
            cfg.default_phases()
        } else {
            cfg.phases.clone()
        };
        let harmonics: Vec<(f64, f64)> = (cfg.lowest_harmonic..=cfg.highest_harmonic)
            .zip(phases)
            .map(|(h, p)| (h as f64, p))
            .collect();
        let mut this = Self {
            fundamental_hz: cfg.fundamental_hz,
            harmonics,
            scale: 1.0,
            table: Vec::new(),
        };
        let peak = this.unscaled_peak();
        this.scale = if peak > 0.0 { cfg.total_peak_volts / peak } else { 0.0 };
        this.table = (0..=TABLE_SIZE)
            .map(|i| this.scale * this.unscaled_at_phase(i as f64 / TABLE_SIZE as f64))
            .collect();
        Ok(this)
    }

    /// Sum of the unit harmonics at a fraction `phase` of the line cycle.
    fn unscaled_at_phase(&self, phase: f64) -> f64 {
        self.harmonics
            .iter()
            .map(|&(h, p)| (2.0 * PI * h * phase + p).sin())
            .sum()
    }

    fn unscaled_peak(&self) -> f64 {
        let f = |x: f64| self.unscaled_at_phase(x).abs();
        let dx = 1.0 / SCAN_POINTS as f64;
        let (best, _) = (0..SCAN_POINTS)
            .map(|i| (i, f(i as f64 * dx)))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        // Golden-section refinement within one scan step either side.
        let (mut lo, mut hi) = ((best as f64 - 1.0) * dx, (best as f64 + 1.0) * dx);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if f(a) > f(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        f(best as f64 * dx).max(f(0.5 * (lo + hi)))
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Exact value at absolute time `t_s`.
    pub fn value(&self, t_s: f64) -> f64 {
        let cycles = t_s * self.fundamental_hz;
        self.scale * self.unscaled_at_phase(cycles - cycles.floor())
    }

    /// Table-interpolated value, within about 1e-7 of [`HarmonicNoise::value`]
    /// relative to the peak.
    #[inline]
    pub fn fast_value(&self, t_s: f64) -> f64 {
        let cycles = t_s * self.fundamental_hz;
        let pos = (cycles - cycles.floor()) * TABLE_SIZE as f64;
        let i = (pos as usize).min(TABLE_SIZE - 1);
        let frac = pos - i as f64;
        self.table[i] + frac * (self.table[i + 1] - self.table[i])
    }

    /// Closed-form rms over whole line cycles.
    pub fn rms(&self) -> f64 {
        self.scale * (self.harmonics.len() as f64 / 2.0).sqrt()
    }
}

pub fn harmonic_noise(t_s: f64, cfg: &HarmonicNoiseConfig) -> Result<f64> {
    Ok(HarmonicNoise::new(cfg)?.value(t_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_in_line_cycle() {
        let h = HarmonicNoise::new(&HarmonicNoiseConfig::default()).unwrap();
        for i in 0..200 {
            let t = i as f64 * 1.37e-4;
            assert!((h.value(t) - h.value(t + 1.0 / 60.0)).abs() < 1e-9);
            assert!((h.fast_value(t) - h.fast_value(t + 1.0 / 60.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn peak_matches_target() {
        let h = HarmonicNoise::new(&HarmonicNoiseConfig::default()).unwrap();
        let peak = (0..200_000)
            .map(|i| h.value(i as f64 / 60.0 / 200_000.0).abs())
            .fold(0.0, f64::max);
        assert!((peak - 1.6).abs() < 0.016, "peak {peak}");
        assert!(peak <= 1.6 + 1e-9);
    }

    #[test]
    fn table_tracks_exact_value() {
        let h = HarmonicNoise::new(&HarmonicNoiseConfig::default()).unwrap();
        for i in 0..5000 {
            let t = 0.123 + i as f64 * 2.9e-6;
            assert!((h.value(t) - h.fast_value(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn phase_count_checked() {
        let cfg = HarmonicNoiseConfig {
            phases: vec![0.0; 3],
            ..Default::default()
        };
        assert!(HarmonicNoise::new(&cfg).is_err());
        let cfg = HarmonicNoiseConfig {
            lowest_harmonic: 5,
            highest_harmonic: 4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn band_limits() {
        let cfg = HarmonicNoiseConfig::default();
        assert_eq!(cfg.lowest_harmonic as f64 * cfg.fundamental_hz, 180.0);
        assert_eq!(cfg.highest_harmonic as f64 * cfg.fundamental_hz, 960.0);
    }
}
