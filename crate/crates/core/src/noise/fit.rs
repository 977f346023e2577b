//! Least-squares fit of Middleton Class A parameters to sample data.
//!
//! Samples are centred and scaled to unit rms, binned into
//! [`HISTOGRAM_BINS`] bins over ±[`HISTOGRAM_SPAN`], and the log of the
//! empirical density is compared with the log of the model's bin-averaged
//! density. Empty bins are skipped. A log-spaced grid over `A` and `Γ` picks
//! the starting point for a shrinking pattern search in log space.

use serde::{Deserialize, Serialize};

use super::middleton::{middleton_cdf, MiddletonParams};
use crate::error::{param, Result};

pub const HISTOGRAM_BINS: usize = 101;
pub const HISTOGRAM_SPAN: f64 = 8.0;
pub const MIN_FIT_SAMPLES: usize = 10_000;

const A_RANGE: (f64, f64) = (1e-3, 10.0);
const GAMMA_RANGE: (f64, f64) = (1e-4, 1.0);
const GRID_POINTS: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiddletonFit {
    pub a: f64,
    pub gamma: f64,
    pub residual: f64,
}

impl MiddletonFit {
    pub fn params(&self, terms: usize) -> MiddletonParams {
        MiddletonParams::new(self.a, self.gamma).with_terms(terms)
    }
}

/// Empirical density of unit-rms samples on the fixed fitting grid.
#[derive(Clone, Debug)]
pub struct NormalizedHistogram {
    pub edges: Vec<f64>,
    pub density: Vec<f64>,
    pub counts: Vec<u64>,
}

impl NormalizedHistogram {
    pub fn from_samples(samples: &[f64]) -> Result<Self> {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let rms = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(rms > 0.0 && rms.is_finite()) {
            return param("samples have zero or non-finite spread");
        }
        let width = 2.0 * HISTOGRAM_SPAN / HISTOGRAM_BINS as f64;
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for x in samples {
            let z = (x - mean) / rms;
            let b = ((z + HISTOGRAM_SPAN) / width).floor();
            if b >= 0.0 && (b as usize) < HISTOGRAM_BINS {
                counts[b as usize] += 1;
            }
        }
        let edges = (0..=HISTOGRAM_BINS)
            .map(|i| -HISTOGRAM_SPAN + i as f64 * width)
            .collect();
        let density = counts.iter().map(|&c| c as f64 / (n * width)).collect();
        Ok(Self {
            edges,
            density,
            counts,
        })
    }

    /// Sum of squared log-density differences over non-empty bins.
    pub fn log_residual(&self, model: &MiddletonParams) -> f64 {
        let mut cdf_lo = middleton_cdf(self.edges[0], model);
        let mut total = 0.0;
        for (i, &d) in self.density.iter().enumerate() {
            let cdf_hi = middleton_cdf(self.edges[i + 1], model);
            if self.counts[i] > 0 {
                let width = self.edges[i + 1] - self.edges[i];
                let m = ((cdf_hi - cdf_lo) / width).max(1e-300);
                total += (d.ln() - m.ln()).powi(2);
            }
            cdf_lo = cdf_hi;
        }
        total
    }
}

fn log_space(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(move |i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
}

pub fn fit_middleton(samples: &[f64], terms: usize) -> Result<MiddletonFit> {
    if samples.len() < MIN_FIT_SAMPLES {
        return param(format!(
            "fit needs at least {MIN_FIT_SAMPLES} samples, got {}",
            samples.len()
        ));
    }
    if terms < 1 {
        return param("fit needs at least one term");
    }
    let hist = NormalizedHistogram::from_samples(samples)?;
    let objective = |log_a: f64, log_g: f64| {
        hist.log_residual(&MiddletonParams::new(10f64.powf(log_a), 10f64.powf(log_g)).with_terms(terms))
    };

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for a in log_space(A_RANGE.0, A_RANGE.1, GRID_POINTS) {
        for g in log_space(GAMMA_RANGE.0, GAMMA_RANGE.1, GRID_POINTS) {
            let r = objective(a.log10(), g.log10());
            if r < best.0 {
                best = (r, a.log10(), g.log10());
            }
        }
    }

    let bounds_a = (A_RANGE.0.log10(), A_RANGE.1.log10());
    let bounds_g = (GAMMA_RANGE.0.log10(), GAMMA_RANGE.1.log10());
    let (mut r, mut la, mut lg) = best;
    let mut step = (bounds_a.1 - bounds_a.0) / (GRID_POINTS - 1) as f64;
    while step > 1e-5 {
        let mut moved = false;
        for (da, dg) in [(step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)] {
            let na = (la + da).clamp(bounds_a.0, bounds_a.1);
            let ng = (lg + dg).clamp(bounds_g.0, bounds_g.1);
            let nr = objective(na, ng);
            if nr < r {
                (r, la, lg) = (nr, na, ng);
                moved = true;
            }
        }
        if !moved {
            step *= 0.5;
        }
    }
    Ok(MiddletonFit {
        a: 10f64.powf(la),
        gamma: 10f64.powf(lg),
        residual: r,
    })
}
