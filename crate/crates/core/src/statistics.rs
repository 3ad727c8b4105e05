//! The h-functions and the five sample averages X̄₁…X̄₅.
//!
//! With T, T′, T″ the generator and its derivatives,
//!
//! ```text
//! h₁(x) = T(x)
//! h₂(x) = log x + [T″(x)/T′(x) − T′(x)/T(x)] · x log x
//! h₃(x) = T′(x)/T(x) · x log x
//! h₄(x) = T′(x) · x log x
//! h₅(x) = β₂ h₃(x) + (α₂ − 1) h₄(x)
//! ```
//!
//! and X̄ⱼ is the sample mean of hⱼ. These averages are everything the
//! closed-form estimators need from the data.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generators::{Generator, GeneratorError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("sample is empty")]
    EmptySample,
    #[error("sample point {index} ({value}) rejected: {source}")]
    Domain {
        index: usize,
        value: f64,
        #[source]
        source: GeneratorError,
    },
    #[error("T or T′ vanishes numerically at x = {0}")]
    ZeroDerivative(f64),
    #[error("non-finite h-value at x = {0}")]
    NonFinite(f64),
    #[error("hyperparameter `{name}` = {value} is invalid (need α > 0, β ≥ 0, finite)")]
    InvalidHyperParameter { name: &'static str, value: f64 },
    #[error("power exponent s must be nonzero and finite, got {0}")]
    ZeroExponent(f64),
}

/// Gamma prior hyperparameters: μ ~ Gamma(α₁, β₁), σ ~ Gamma(α₂, β₂).
///
/// The closed-form estimators only ever see the [`SigmaPrior`] view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub alpha1: f64,
    pub beta1: f64,
    pub alpha2: f64,
    pub beta2: f64,
}

impl HyperParams {
    /// Rates may be zero (improper flat limit); shapes must be positive.
    pub fn new(alpha1: f64, beta1: f64, alpha2: f64, beta2: f64) -> Result<Self, StatsError> {
        let shape = |name, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(StatsError::InvalidHyperParameter { name, value: v })
            }
        };
        let rate = |name, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(StatsError::InvalidHyperParameter { name, value: v })
            }
        };
        Ok(Self {
            alpha1: shape("alpha1", alpha1)?,
            beta1: rate("beta1", beta1)?,
            alpha2: shape("alpha2", alpha2)?,
            beta2: rate("beta2", beta2)?,
        })
    }

    /// All four hyperparameters equal to `v`.
    pub fn uniform(v: f64) -> Result<Self, StatsError> {
        Self::new(v, v, v, v)
    }

    pub fn sigma_prior(&self) -> SigmaPrior {
        SigmaPrior { alpha2: self.alpha2, beta2: self.beta2 }
    }
}

impl Default for HyperParams {
    fn default() -> Self {
        Self { alpha1: 0.01, beta1: 0.01, alpha2: 0.01, beta2: 0.01 }
    }
}

/// The σ-prior hyperparameters (α₂, β₂), the only ones the closed forms use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPrior {
    pub alpha2: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HValues {
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
    pub h4: f64,
}

/// h₁…h₄ at one point. For pure power generators h₂ is exactly zero.
pub fn h_values(g: &Generator, x: f64) -> Result<HValues, StatsError> {
    let v = g.evaluate(x).map_err(|source| StatsError::Domain { index: 0, value: x, source })?;
    if v.t == 0.0 || v.dt == 0.0 {
        return Err(StatsError::ZeroDerivative(x));
    }
    let log_x = x.ln();
    let x_log_x = x * log_x;
    let r1 = v.dt / v.t;
    let h2 = if g.power_exponent().is_some() {
        0.0
    } else {
        log_x + (v.d2t / v.dt - r1) * x_log_x
    };
    let h = HValues { h1: v.t, h2, h3: r1 * x_log_x, h4: v.dt * x_log_x };
    if [h.h1, h.h2, h.h3, h.h4].iter().all(|c| c.is_finite()) {
        Ok(h)
    } else {
        Err(StatsError::NonFinite(x))
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

/// Sample size, the five averages, and the σ-prior X̄₅ was assembled with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleStats {
    n: usize,
    xbar1: f64,
    xbar2: f64,
    xbar3: f64,
    xbar4: f64,
    xbar5: f64,
    prior: SigmaPrior,
}

impl SampleStats {
    /// Assemble from the four h-means; X̄₅ = β₂X̄₃ + (α₂ − 1)X̄₄.
    pub fn from_means(n: usize, xbar1: f64, xbar2: f64, xbar3: f64, xbar4: f64, prior: SigmaPrior) -> Self {
        let xbar5 = prior.beta2 * xbar3 + (prior.alpha2 - 1.0) * xbar4;
        Self { n, xbar1, xbar2, xbar3, xbar4, xbar5, prior }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn xbar1(&self) -> f64 {
        self.xbar1
    }
    pub fn xbar2(&self) -> f64 {
        self.xbar2
    }
    pub fn xbar3(&self) -> f64 {
        self.xbar3
    }
    pub fn xbar4(&self) -> f64 {
        self.xbar4
    }
    pub fn xbar5(&self) -> f64 {
        self.xbar5
    }
    pub fn prior(&self) -> SigmaPrior {
        self.prior
    }
}

fn means_of<I>(n: usize, values: I, prior: SigmaPrior) -> Result<SampleStats, StatsError>
where
    I: Iterator<Item = Result<HValues, StatsError>>,
{
    let mut acc = [CompensatedSum::default(); 4];
    for h in values {
        let h = h?;
        acc[0].add(h.h1);
        acc[1].add(h.h2);
        acc[2].add(h.h3);
        acc[3].add(h.h4);
    }
    let nf = n as f64;
    Ok(SampleStats::from_means(
        n,
        acc[0].total() / nf,
        acc[1].total() / nf,
        acc[2].total() / nf,
        acc[3].total() / nf,
        prior,
    ))
}

/// One left-to-right pass over the sample.
pub fn compute_stats(g: &Generator, sample: &[f64], prior: SigmaPrior) -> Result<SampleStats, StatsError> {
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let values = sample.iter().enumerate().map(|(index, &x)| {
        h_values(g, x).map_err(|e| match e {
            StatsError::Domain { value, source, .. } => StatsError::Domain { index, value, source },
            other => other,
        })
    });
    means_of(sample.len(), values, prior)
}

/// Averages for T(x) = x^(−s), written directly in terms of x^(−s) and
/// log x^(−s) = −s log x. X̄₂ is identically zero.
pub fn power_stats(sample: &[f64], s: f64, prior: SigmaPrior) -> Result<SampleStats, StatsError> {
    if !(s != 0.0 && s.is_finite()) {
        return Err(StatsError::ZeroExponent(s));
    }
    if sample.is_empty() {
        return Err(StatsError::EmptySample);
    }
    let values = sample.iter().enumerate().map(|(index, &x)| {
        if !(x > 0.0 && x.is_finite()) {
            return Err(StatsError::Domain { index, value: x, source: GeneratorError::Domain(x) });
        }
        let t = x.powf(-s);
        let log_t = -s * x.ln();
        if t == 0.0 || !t.is_finite() {
            return Err(StatsError::Domain { index, value: x, source: GeneratorError::NumericRange(x) });
        }
        Ok(HValues { h1: t, h2: 0.0, h3: log_t, h4: t * log_t })
    });
    means_of(sample.len(), values, prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::E;

    const IDENTITY: Generator = Generator::Power { k: 1.0 };

    fn prior(a: f64, b: f64) -> SigmaPrior {
        SigmaPrior { alpha2: a, beta2: b }
    }

    #[test]
    fn h_examples() {
        let h = h_values(&IDENTITY, 1.0).unwrap();
        assert_eq!(h, HValues { h1: 1.0, h2: 0.0, h3: 0.0, h4: 0.0 });

        let h = h_values(&IDENTITY, E).unwrap();
        assert_eq!(h.h1, E);
        assert_eq!(h.h2, 0.0);
        assert!((h.h3 - 1.0).abs() < 1e-15);
        assert!((h.h4 - E).abs() < 1e-15);

        let h = h_values(&Generator::Gompertz { delta: 1.0 }, 1.0).unwrap();
        assert!((h.h1 - (E - 1.0)).abs() < 1e-15);
        assert_eq!((h.h2, h.h3, h.h4), (0.0, 0.0, 0.0));
    }

    #[test]
    fn stats_examples() {
        let s = compute_stats(&IDENTITY, &[1.0, 1.0, 1.0], prior(0.01, 0.01)).unwrap();
        assert_eq!((s.xbar1(), s.xbar2(), s.xbar3(), s.xbar4(), s.xbar5()), (1.0, 0.0, 0.0, 0.0, 0.0));

        let s = compute_stats(&IDENTITY, &[1.0, E], prior(0.01, 0.01)).unwrap();
        // independent two-pass evaluation
        let x1 = (1.0 + E) / 2.0;
        let x3 = (0.0 + E.ln()) / 2.0;
        let x4 = (0.0 + E * E.ln()) / 2.0;
        assert!((s.xbar1() - x1).abs() < 1e-15);
        assert_eq!(s.xbar2(), 0.0);
        assert!((s.xbar3() - 0.5).abs() < 1e-15 && (s.xbar3() - x3).abs() < 1e-15);
        assert!((s.xbar4() - E / 2.0).abs() < 1e-15 && (s.xbar4() - x4).abs() < 1e-15);
        let x5 = 0.01 * 0.5 + (0.01 - 1.0) * (E / 2.0);
        assert!((s.xbar5() - x5).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_index() {
        assert_eq!(compute_stats(&IDENTITY, &[], prior(1.0, 1.0)), Err(StatsError::EmptySample));
        match compute_stats(&IDENTITY, &[1.0, 2.0, -3.0], prior(1.0, 1.0)) {
            Err(StatsError::Domain { index, value, .. }) => assert_eq!((index, value), (2, -3.0)),
            other => panic!("unexpected {other:?}"),
        }
        match power_stats(&[1.0, 0.0], 1.0, prior(1.0, 1.0)) {
            Err(StatsError::Domain { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(power_stats(&[1.0], 0.0, prior(1.0, 1.0)), Err(StatsError::ZeroExponent(0.0)));
        // T′ underflows to zero far out on a steep power
        assert!(compute_stats(&Generator::Power { k: 400.0 }, &[1e-3], prior(1.0, 1.0)).is_err());
    }

    #[test]
    fn hyperparameter_validation() {
        assert!(HyperParams::new(1.0, 0.0, 1.0, 0.0).is_ok());
        assert!(HyperParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(HyperParams::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert_eq!(HyperParams::default(), HyperParams::uniform(0.01).unwrap());
    }

    fn sample_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..20.0, 1..60)
    }

    proptest! {
        #[test]
        fn power_generators_annihilate_h2(sample in sample_strategy(), s in prop_oneof![-3.0f64..-0.1, 0.1f64..3.0]) {
            let g = Generator::Power { k: -s };
            let st = compute_stats(&g, &sample, prior(0.01, 0.01)).unwrap();
            prop_assert!(st.xbar2().abs() <= 1e-12);
            prop_assert_eq!(power_stats(&sample, s, prior(0.01, 0.01)).unwrap().xbar2(), 0.0);
        }

        #[test]
        fn xbar5_identity_is_exact(sample in sample_strategy(), a in 0.01f64..5.0, b in 0.0f64..5.0) {
            let st = compute_stats(&Generator::Gompertz { delta: 0.3 }, &sample, prior(a, b)).unwrap();
            prop_assert_eq!(st.xbar5(), b * st.xbar3() + (a - 1.0) * st.xbar4());
        }

        #[test]
        fn permutation_stability(mut sample in sample_strategy(), seed in any::<u64>()) {
            let g = Generator::FlexibleWeibull { b: 0.5, c: 0.5 };
            let p = prior(0.01, 0.01);
            let a = compute_stats(&g, &sample, p).unwrap();
            // deterministic Fisher-Yates from the seed
            let mut state = seed;
            for i in (1..sample.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                sample.swap(i, (state >> 33) as usize % (i + 1));
            }
            let b = compute_stats(&g, &sample, p).unwrap();
            let scale: Vec<f64> = {
                let hs: Vec<HValues> = sample.iter().map(|&x| h_values(&g, x).unwrap()).collect();
                let n = hs.len() as f64;
                vec![
                    hs.iter().map(|h| h.h1.abs()).sum::<f64>() / n,
                    hs.iter().map(|h| h.h2.abs()).sum::<f64>() / n,
                    hs.iter().map(|h| h.h3.abs()).sum::<f64>() / n,
                    hs.iter().map(|h| h.h4.abs()).sum::<f64>() / n,
                ]
            };
            let pairs = [(a.xbar1(), b.xbar1()), (a.xbar2(), b.xbar2()), (a.xbar3(), b.xbar3()), (a.xbar4(), b.xbar4())];
            for ((u, v), s) in pairs.iter().zip(scale) {
                prop_assert!((u - v).abs() <= 1e-12 * s.max(f64::MIN_POSITIVE));
            }
        }
    }
}
