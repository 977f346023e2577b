//! Channel noise: Middleton Class A, line harmonics, impulse trains, white
//! Gaussian noise and a DC offset, summed onto a signal.
//!
//! Every component is a pure function of a 64-bit key and the absolute sample
//! index `round(origin · rate)`, so any sub-window regenerates identically.
//! Random components are drawn in blocks of [`NOISE_BLOCK`] samples, each
//! block seeded from the key and its block number.

mod fit;
mod harmonic;
mod impulse;
mod middleton;

pub use fit::{fit_middleton, MiddletonFit, NormalizedHistogram, HISTOGRAM_BINS, HISTOGRAM_SPAN, MIN_FIT_SAMPLES};
pub use harmonic::{harmonic_noise, HarmonicNoise, HarmonicNoiseConfig};
pub use impulse::{add_impulse_train, burst_windows, ImpulseTrainConfig, LineReference, Polarity};
pub use middleton::{middleton_cdf, middleton_pdf, middleton_sample, MiddletonParams, MiddletonSampler};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codec::sub_seed;
use crate::error::{param, Result};
use crate::waveform::{rms, Waveform};

pub const NOISE_BLOCK: usize = 1024;

const MIDDLETON_STREAM: u64 = 1;
const AWGN_STREAM: u64 = 2;
const TRAIN_STREAM_BASE: u64 = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub middleton: Option<MiddletonParams>,
    pub harmonics: Option<HarmonicNoiseConfig>,
    pub impulse_trains: Vec<ImpulseTrainConfig>,
    pub awgn_rms_volts: f64,
    pub dc_offset_volts: f64,
    pub line: LineReference,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::laboratory()
    }
}

impl NoiseConfig {
    /// Nothing enabled.
    pub fn quiet() -> Self {
        Self {
            middleton: None,
            harmonics: None,
            impulse_trains: Vec::new(),
            awgn_rms_volts: 0.0,
            dc_offset_volts: 0.0,
            line: LineReference::default(),
        }
    }

    /// Line harmonics at 1.6 V peak, both measured impulse trains, and a
    /// Middleton Class A background.
    pub fn laboratory() -> Self {
        Self {
            middleton: Some(MiddletonParams::default().with_sigma(LABORATORY_MIDDLETON_SIGMA)),
            harmonics: Some(HarmonicNoiseConfig::default()),
            impulse_trains: vec![
                ImpulseTrainConfig::line_locked(),
                ImpulseTrainConfig::asynchronous_burst(),
            ],
            ..Self::quiet()
        }
    }

    pub fn awgn(rms_volts: f64) -> Self {
        Self {
            awgn_rms_volts: rms_volts,
            ..Self::quiet()
        }
    }

    pub fn is_quiet(&self) -> bool {
        self.middleton.is_none()
            && self.harmonics.is_none()
            && self.impulse_trains.is_empty()
            && self.awgn_rms_volts == 0.0
            && self.dc_offset_volts == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(m) = &self.middleton {
            m.validate()?;
        }
        if let Some(h) = &self.harmonics {
            h.validate()?;
        }
        for t in &self.impulse_trains {
            t.validate()?;
        }
        if !(self.awgn_rms_volts >= 0.0 && self.awgn_rms_volts.is_finite()) {
            return param("awgn_rms_volts must be non-negative");
        }
        if !self.dc_offset_volts.is_finite() {
            return param("dc_offset_volts must be finite");
        }
        if !(self.line.frequency_hz > 0.0 && self.line.phase_ref_s.is_finite()) {
            return param("line frequency must be positive");
        }
        Ok(())
    }
}

/// Middleton rms of [`NoiseConfig::laboratory`], in volts.
pub const LABORATORY_MIDDLETON_SIGMA: f64 = 0.25;

/// A validated [`NoiseConfig`] with its samplers and tables built.
#[derive(Clone, Debug)]
pub struct NoiseGenerator {
    cfg: NoiseConfig,
    middleton: Option<MiddletonSampler>,
    harmonics: Option<HarmonicNoise>,
}

impl NoiseGenerator {
    pub fn new(cfg: &NoiseConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg: cfg.clone(),
            middleton: cfg.middleton.map(MiddletonSampler::new).transpose()?,
            harmonics: cfg.harmonics.as_ref().map(HarmonicNoise::new).transpose()?,
        })
    }

    pub fn config(&self) -> &NoiseConfig {
        &self.cfg
    }

    /// Adds the noise for absolute samples `start_index..start_index + out.len()`.
    pub fn add_to(&self, out: &mut [f64], start_index: i64, rate_hz: f64, key: u64) {
        if self.cfg.dc_offset_volts != 0.0 {
            out.iter_mut().for_each(|v| *v += self.cfg.dc_offset_volts);
        }
        if let Some(h) = &self.harmonics {
            for (i, v) in out.iter_mut().enumerate() {
                *v += h.fast_value((start_index + i as i64) as f64 / rate_hz);
            }
        }
        if let Some(s) = &self.middleton {
            add_blocks(out, start_index, sub_seed(key, MIDDLETON_STREAM), |rng| s.sample(rng));
        }
        if self.cfg.awgn_rms_volts > 0.0 {
            let sd = self.cfg.awgn_rms_volts;
            add_blocks(out, start_index, sub_seed(key, AWGN_STREAM), |rng| {
                sd * rng.sample::<f64, _>(StandardNormal)
            });
        }
        for (i, train) in self.cfg.impulse_trains.iter().enumerate() {
            let train_key = sub_seed(key, TRAIN_STREAM_BASE + i as u64);
            add_impulse_train(out, start_index, rate_hz, train, train_key, &self.cfg.line);
        }
    }

    pub fn waveform(&self, len: usize, rate_hz: f64, origin_time_s: f64, key: u64) -> Waveform {
        let mut w = Waveform::zeros(len, rate_hz, origin_time_s);
        let start = w.start_index();
        self.add_to(&mut w.samples, start, rate_hz, key);
        w
    }
}

fn add_blocks(out: &mut [f64], start_index: i64, key: u64, mut draw: impl FnMut(&mut ChaCha8Rng) -> f64) {
    let block = NOISE_BLOCK as i64;
    let end = start_index + out.len() as i64;
    let mut b = start_index.div_euclid(block);
    while b * block < end {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(key, b as u64));
        let lo = b * block;
        for abs in lo..lo + block {
            let v = draw(&mut rng);
            if abs >= start_index && abs < end {
                out[(abs - start_index) as usize] += v;
            }
        }
        b += 1;
    }
}

/// The noise alone over `len` samples, keyed as [`apply_channel`] keys it.
pub fn noise_waveform(
    cfg: &NoiseConfig,
    len: usize,
    rate_hz: f64,
    origin_time_s: f64,
    key: u64,
) -> Result<Waveform> {
    Ok(NoiseGenerator::new(cfg)?.waveform(len, rate_hz, origin_time_s, key))
}

/// `signal` plus noise keyed by one draw from `rng`.
pub fn apply_channel<R: RngCore + ?Sized>(signal: &Waveform, cfg: &NoiseConfig, rng: &mut R) -> Result<Waveform> {
    let generator = NoiseGenerator::new(cfg)?;
    let key = rng.next_u64();
    let mut out = signal.clone();
    generator.add_to(&mut out.samples, signal.start_index(), signal.sample_rate_hz, key);
    Ok(out)
}

/// Mean of the per-trace rms over `traces` independent noise realizations of
/// `duration_s` each.
pub fn noise_rms<R: RngCore + ?Sized>(
    cfg: &NoiseConfig,
    duration_s: f64,
    rate_hz: f64,
    traces: usize,
    rng: &mut R,
) -> Result<f64> {
    let generator = NoiseGenerator::new(cfg)?;
    if traces == 0 {
        return param("noise_rms needs at least one trace");
    }
    let len = (duration_s * rate_hz).round() as usize;
    if len == 0 {
        return param("noise_rms window is shorter than one sample");
    }
    if cfg.harmonics.is_some() && duration_s * cfg.line.frequency_hz < 10.0 - 1e-9 {
        return param("noise_rms window must span at least ten line cycles");
    }
    let mut buf = vec![0.0; len];
    let mut total = 0.0;
    for _ in 0..traces {
        let key = rng.next_u64();
        let origin = rng.random::<f64>() * 3600.0;
        let start = (origin * rate_hz).round() as i64;
        buf.iter_mut().for_each(|v| *v = 0.0);
        generator.add_to(&mut buf, start, rate_hz, key);
        total += rms(&buf);
    }
    Ok(total / traces as f64)
}
