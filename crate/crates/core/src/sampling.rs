//! Random variates for the registered families.
//!
//! If U ~ Gamma(shape μ, rate μσ) then X = T⁻¹(U) has the family density, so
//! every row is sampled through one gamma draw and one generator inverse.
//!
//! The gamma sampler is pinned: Marsaglia–Tsang squeeze/rejection for
//! shape ≥ 1, with the U^(1/shape) boost below 1, fed by Marsaglia's polar
//! normal method. Changing either changes every published table, so both
//! stay as they are.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use thiserror::Error;

use crate::generators::{DistributionSpec, GeneratorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("gamma parameters must be positive and finite (shape {shape}, rate {rate})")]
    InvalidGamma { shape: f64, rate: f64 },
    #[error("inverse generator failed at draw {index}: {source}")]
    Inverse { index: usize, source: GeneratorError },
}

/// A reproducible random stream keyed by (seed, stream id).
///
/// Backed by ChaCha8 with the stream id in the cipher's stream word, so
/// distinct ids are independent without any coordination between workers.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self { seed, stream_id, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal, Marsaglia polar method (spare discarded).
    pub fn normal(&mut self) -> f64 {
        loop {
            let a = 2.0 * self.uniform() - 1.0;
            let b = 2.0 * self.uniform() - 1.0;
            let s = a * a + b * b;
            if s < 1.0 && s > 0.0 {
                return a * (-2.0 * s.ln() / s).sqrt();
            }
        }
    }
}

/// One Gamma(shape, rate) variate.
pub fn sample_gamma(rng: &mut RngStream, shape: f64, rate: f64) -> Result<f64, SampleError> {
    if !(shape > 0.0 && shape.is_finite() && rate > 0.0 && rate.is_finite()) {
        return Err(SampleError::InvalidGamma { shape, rate });
    }
    if shape < 1.0 {
        let boost = rng.uniform().powf(1.0 / shape);
        return Ok(standard_gamma(rng, shape + 1.0) * boost / rate);
    }
    Ok(standard_gamma(rng, shape) / rate)
}

fn standard_gamma(rng: &mut RngStream, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = rng.normal();
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = rng.uniform();
        let z2 = z * z;
        if u < 1.0 - 0.0331 * z2 * z2 || u.ln() < 0.5 * z2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// `n` i.i.d. draws from `spec`.
pub fn sample_family(rng: &mut RngStream, spec: &DistributionSpec, n: usize) -> Result<Vec<f64>, SampleError> {
    let CanonicalShape { shape, rate } = CanonicalShape::of(spec);
    (0..n)
        .map(|index| {
            let u = sample_gamma(rng, shape, rate)?;
            spec.generator.t_inverse(u).map_err(|source| SampleError::Inverse { index, source })
        })
        .collect()
}

struct CanonicalShape {
    shape: f64,
    rate: f64,
}

impl CanonicalShape {
    fn of(spec: &DistributionSpec) -> Self {
        let (mu, sigma) = (spec.canonical.mu, spec.canonical.sigma);
        Self { shape: mu, rate: mu * sigma }
    }
}

/// Two-sided Kolmogorov–Smirnov statistic of `sample` against `cdf`.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// KS critical value at the 0.1% level, asymptotic form.
pub fn ks_critical_001(n: usize) -> f64 {
    1.949 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::{family, CanonicalParams};
    use crate::special::gamma_cdf;
    use std::f64::consts::PI;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    fn spec(name: &str, shape: &[(&str, f64)], mu: f64, sigma: f64) -> DistributionSpec {
        DistributionSpec::from_family(family(name, shape).unwrap(), CanonicalParams::new(mu, sigma).unwrap())
    }

    #[test]
    fn uniform_stays_open() {
        let mut rng = RngStream::new(1, 0);
        for _ in 0..10_000 {
            let u = rng.uniform();
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn unit_exponential_ks() {
        let mut rng = RngStream::new(11, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| sample_gamma(&mut rng, 1.0, 1.0).unwrap()).collect();
        let d = ks_statistic(&xs, |x| 1.0 - (-x).exp());
        assert!(d < 1.36 / 100.0, "D = {d}");
    }

    #[test]
    fn small_shape_ks() {
        let mut rng = RngStream::new(12, 0);
        let xs: Vec<f64> = (0..10_000).map(|_| sample_gamma(&mut rng, 0.3, 2.0).unwrap()).collect();
        let d = ks_statistic(&xs, |x| gamma_cdf(x, 0.3, 2.0).unwrap());
        assert!(d < ks_critical_001(xs.len()), "D = {d}");
    }

    #[test]
    fn gamma_mean() {
        let mut rng = RngStream::new(13, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| sample_gamma(&mut rng, 2.0, 2.0).unwrap()).collect();
        let (m, _) = mean_var(&xs);
        // Var = shape / rate² = 0.5
        let se = (0.5f64 / xs.len() as f64).sqrt();
        assert!((m - 1.0).abs() < 4.0 * se, "mean {m}");
    }

    #[test]
    fn determinism_and_stream_separation() {
        let draw = |seed, id| {
            let mut rng = RngStream::new(seed, id);
            (0..5).map(|_| sample_gamma(&mut rng, 2.0, 1.0).unwrap().to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(draw(7, 3), draw(7, 3));
        assert_ne!(draw(7, 3), draw(7, 4));
        assert_ne!(draw(7, 3), draw(8, 3));
    }

    #[test]
    fn rejects_bad_gamma_parameters() {
        let mut rng = RngStream::new(0, 0);
        assert!(sample_gamma(&mut rng, 0.0, 1.0).is_err());
        assert!(sample_gamma(&mut rng, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn identity_generator_is_gamma() {
        let s = spec("gamma", &[], 2.0, 1.0);
        let mut a = RngStream::new(5, 9);
        let mut b = RngStream::new(5, 9);
        let xs = sample_family(&mut a, &s, 20).unwrap();
        let us: Vec<f64> = (0..20).map(|_| sample_gamma(&mut b, 2.0, 2.0).unwrap()).collect();
        assert_eq!(xs, us);
    }

    #[test]
    fn rayleigh_mean() {
        // Rayleigh(β): μ = 1, σ = 1/(2β²)
        let beta = 1.7;
        let s = spec("rayleigh", &[], 1.0, 1.0 / (2.0 * beta * beta));
        let mut rng = RngStream::new(21, 0);
        let xs = sample_family(&mut rng, &s, 100_000).unwrap();
        let (m, _) = mean_var(&xs);
        let var = (4.0 - PI) / 2.0 * beta * beta;
        let se = (var / xs.len() as f64).sqrt();
        assert!((m - beta * (PI / 2.0).sqrt()).abs() < 4.0 * se);
    }

    #[test]
    fn transformed_moments_across_rows() {
        let rows: [(&str, &[(&str, f64)]); 8] = [
            ("gamma", &[]),
            ("inverse_gamma", &[]),
            ("weibull", &[("delta", 2.0)]),
            ("inverse_weibull", &[("delta", 2.0)]),
            ("gompertz", &[("delta", 0.5)]),
            ("burr_xii", &[("c", 2.0)]),
            ("flexible_weibull", &[("b", 1.5), ("c", 0.5)]),
            ("traditional_weibull", &[("b", 1.5), ("c", 2.0), ("d", 0.3)]),
        ];
        let (mu, sigma) = (2.0, 1.0);
        for (i, (name, shape)) in rows.iter().enumerate() {
            let s = spec(name, shape, mu, sigma);
            let mut rng = RngStream::new(100 + i as u64, 0);
            let xs = sample_family(&mut rng, &s, 20_000).unwrap();
            let ts: Vec<f64> = xs.iter().map(|&x| s.generator.t(x).unwrap()).collect();
            let (m, v) = mean_var(&ts);
            let n = ts.len() as f64;
            let true_var = 1.0 / (mu * sigma * sigma);
            assert!((m - 1.0 / sigma).abs() < 4.0 * (true_var / n).sqrt(), "{name}: mean {m}");
            // Var of the sample variance for a gamma: (κ₄ + 2σ⁴)/n with excess kurtosis 6/μ
            let var_se = (true_var * true_var * (2.0 + 6.0 / mu) / n).sqrt();
            assert!((v - true_var).abs() < 4.0 * var_se, "{name}: var {v}");
        }
    }
}
