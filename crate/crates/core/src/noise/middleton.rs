//! Middleton Class A noise: a Poisson-weighted mixture of zero-mean Gaussians.
//!
//! Term `m` has weight `e^{−A} A^m / m!` and variance
//! `σ² (m/A + Γ) / (1 + Γ)`. The density and distribution functions use the
//! first `terms` components renormalized to unit mass; the sampler draws from
//! the untruncated mixture, whose variance is exactly `σ²`.

use std::f64::consts::{PI, SQRT_2};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MiddletonParams {
    /// Impulsive index.
    pub a: f64,
    /// Gaussian-to-impulsive power ratio.
    pub gamma: f64,
    /// Total rms in volts.
    pub sigma_total: f64,
    /// Mixture terms kept by the density.
    pub terms: usize,
}

impl Default for MiddletonParams {
    fn default() -> Self {
        Self {
            a: 0.305,
            gamma: 0.046,
            sigma_total: 1.0,
            terms: 3,
        }
    }
}

impl MiddletonParams {
    pub fn new(a: f64, gamma: f64) -> Self {
        Self {
            a,
            gamma,
            ..Self::default()
        }
    }

    pub fn with_terms(self, terms: usize) -> Self {
        Self { terms, ..self }
    }

    pub fn with_sigma(self, sigma_total: f64) -> Self {
        Self {
            sigma_total,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.gamma > 0.0 && self.sigma_total > 0.0) {
            return param("Middleton A, Gamma and sigma_total must be positive");
        }
        if !(self.a.is_finite() && self.gamma.is_finite() && self.sigma_total.is_finite()) {
            return param("Middleton parameters must be finite");
        }
        if self.terms < 1 {
            return param("Middleton model needs at least one term");
        }
        Ok(())
    }

    pub fn component_variance(&self, m: usize) -> f64 {
        self.sigma_total * self.sigma_total * (m as f64 / self.a + self.gamma) / (1.0 + self.gamma)
    }

    /// Unnormalized Poisson weights of the first `terms` components.
    fn weights(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let mut w = (-self.a).exp();
        (0..self.terms).map(move |m| {
            if m > 0 {
                w *= self.a / m as f64;
            }
            (m, w)
        })
    }
}

fn normal_pdf(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

fn normal_cdf(x: f64, var: f64) -> f64 {
    0.5 * libm::erfc(-x / (SQRT_2 * var.sqrt()))
}

pub fn middleton_pdf(x: f64, params: &MiddletonParams) -> f64 {
    let (mut num, mut z) = (0.0, 0.0);
    for (m, w) in params.weights() {
        num += w * normal_pdf(x, params.component_variance(m));
        z += w;
    }
    num / z
}

pub fn middleton_cdf(x: f64, params: &MiddletonParams) -> f64 {
    let (mut num, mut z) = (0.0, 0.0);
    for (m, w) in params.weights() {
        num += w * normal_cdf(x, params.component_variance(m));
        z += w;
    }
    num / z
}

/// Sampler for the untruncated mixture.
///
/// The Poisson index is drawn by inversion of a precomputed cumulative table;
/// draws that land in the far tail continue the recurrence term by term.
#[derive(Clone, Debug)]
pub struct MiddletonSampler {
    params: MiddletonParams,
    cumulative: Vec<f64>,
    std_devs: Vec<f64>,
}

impl MiddletonSampler {
    pub fn new(params: MiddletonParams) -> Result<Self> {
        params.validate()?;
        let mut cumulative = Vec::new();
        let mut std_devs = Vec::new();
        let mut w = (-params.a).exp();
        let mut acc = 0.0;
        let mut m = 0usize;
        loop {
            acc += w;
            cumulative.push(acc);
            std_devs.push(params.component_variance(m).sqrt());
            m += 1;
            w *= params.a / m as f64;
            if (w < 1e-18 && m as f64 > params.a) || m > 4096 {
                break;
            }
        }
        Ok(Self {
            params,
            cumulative,
            std_devs,
        })
    }

    pub fn params(&self) -> &MiddletonParams {
        &self.params
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let std_dev = match self.cumulative.iter().position(|&c| u < c) {
            Some(m) => self.std_devs[m],
            None => self.tail_std_dev(u),
        };
        let z: f64 = rng.sample(StandardNormal);
        std_dev * z
    }

    #[cold]
    fn tail_std_dev(&self, u: f64) -> f64 {
        let a = self.params.a;
        let mut m = self.cumulative.len() - 1;
        let mut acc = *self.cumulative.last().unwrap();
        let mut w = (-a).exp();
        for j in 1..=m {
            w *= a / j as f64;
        }
        while u >= acc && w > 0.0 {
            m += 1;
            w *= a / m as f64;
            acc += w;
        }
        self.params.component_variance(m).sqrt()
    }
}

/// One draw from the untruncated Middleton Class A mixture.
pub fn middleton_sample<R: Rng + ?Sized>(params: &MiddletonParams, rng: &mut R) -> Result<f64> {
    Ok(MiddletonSampler::new(*params)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pdf_is_even_and_peaked() {
        let p = MiddletonParams::default();
        for x in [0.1, 0.7, 2.0, 5.5] {
            assert_eq!(middleton_pdf(x, &p), middleton_pdf(-x, &p));
        }
        assert!(middleton_pdf(0.0, &p) > 0.3989);
        assert!((p.component_variance(0) - 0.046 / 1.046).abs() < 1e-12);
    }

    #[test]
    fn cdf_limits() {
        let p = MiddletonParams::default().with_terms(10);
        assert!((middleton_cdf(0.0, &p) - 0.5).abs() < 1e-12);
        assert!(middleton_cdf(-60.0, &p) < 1e-12);
        assert!((middleton_cdf(60.0, &p) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_params() {
        assert!(MiddletonParams::new(0.0, 0.1).validate().is_err());
        assert!(MiddletonParams::new(0.1, -1.0).validate().is_err());
        assert!(MiddletonParams::default().with_terms(0).validate().is_err());
    }

    #[test]
    fn sampler_is_seeded() {
        let s = MiddletonSampler::new(MiddletonParams::default()).unwrap();
        let a: Vec<f64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            (0..10).map(|_| s.sample(&mut rng)).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..10).map(|_| s.sample(&mut rng)).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_moments() {
        let p = MiddletonParams::default();
        let s = MiddletonSampler::new(p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000;
        let xs: Vec<f64> = (0..n).map(|_| s.sample(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 * (1.0 / n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn tail_table_covers_large_a() {
        let s = MiddletonSampler::new(MiddletonParams::new(30.0, 0.1)).unwrap();
        assert!(*s.cumulative.last().unwrap() > 1.0 - 1e-12);
        assert!(s.tail_std_dev(1.0 - 1e-18) > 0.0);
    }
}
