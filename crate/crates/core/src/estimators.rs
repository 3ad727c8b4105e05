//! Closed-form MAP estimators for (μ, σ).
//!
//! Eliminating the transformation parameter from the MAP system leaves
//!
//! ```text
//! μ(σ) = (1 + X̄₂) / (σX̄₄ − X̄₃)
//! ```
//!
//! and substituting this into the σ-stationarity equation
//! `nμ/σ − μnX̄₁ + (α₂ − 1)/σ − β₂ = 0` gives the quadratic
//!
//! ```text
//! q(σ) = (β₂/n)X̄₄ σ² − [(1/n)X̄₅ − (1 + X̄₂)X̄₁] σ + [((α₂ − 1)/n)X̄₃ − (1 + X̄₂)]
//! ```
//!
//! whose "+" root is σ̂; μ̂ = μ(σ̂). Neither estimator depends on the μ-prior.
//!
//! The "+" root is evaluated in whichever of its two algebraically equal
//! forms avoids cancellation, since β₂/n is tiny in practice and the
//! textbook form loses most of its digits there.

use std::fmt;

use thiserror::Error;

use crate::generators::{Constraint, Generator, SigmaLink};
use crate::statistics::{compute_stats, power_stats, SampleStats, SigmaPrior, StatsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimateError {
    #[error("σX̄₄ − X̄₃ = {denominator} is not positive; no positive μ at this σ")]
    DegenerateDenominator { denominator: f64 },
    #[error("negative discriminant {discriminant} in the σ quadratic")]
    NegativeDiscriminant { discriminant: f64 },
    #[error("the + root {plus_root} is not positive (− root {minus_root})")]
    NonpositiveRoot { plus_root: f64, minus_root: f64 },
    #[error("quadratic coefficient vanishes (X̄₄ = 0)")]
    ZeroQuadraticCoefficient,
    #[error("X̄₄ = 0")]
    ZeroXbar4,
    #[error("X̄₃ = 0 in the reciprocal-link estimator")]
    ZeroLogMean,
    #[error("estimate {value} is not positive")]
    NonpositiveEstimate { value: f64 },
    #[error("linked-parameter equation has no sign change on [1e-8, 1e8]")]
    NoSignChange,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// How an [`Estimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    ClosedForm,
    ClosedFormPower,
    FixedMu,
    FixedSigma,
    Linked,
    MapNumeric,
    MlNumeric,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ClosedForm => "closed_form",
            Method::ClosedFormPower => "closed_form_power",
            Method::FixedMu => "fixed_mu",
            Method::FixedSigma => "fixed_sigma",
            Method::Linked => "linked",
            Method::MapNumeric => "map_numeric",
            Method::MlNumeric => "ml_numeric",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Residuals and side information attached to an estimate.
///
/// `residual_sigma_eq` is ∂log π/∂σ at the estimate. `residual_mu_eq` is the
/// equation that pins μ for the method: n·[1 + X̄₂ − μ(σX̄₄ − X̄₃)] for the
/// closed forms, ∂log π/∂μ for the numeric fitters. `mu_score` carries the
/// digamma-equation residual when a caller with the full sample computes it.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Diagnostics {
    pub discriminant: Option<f64>,
    pub residual_sigma_eq: f64,
    pub residual_mu_eq: f64,
    pub mu_score: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mu: Option<f64>,
    pub sigma: Option<f64>,
    pub method: Method,
    pub diagnostics: Diagnostics,
}

/// Coefficients (a, b, c) of q(σ) = aσ² − bσ + c.
pub fn sigma_quadratic(stats: &SampleStats) -> (f64, f64, f64) {
    let n = stats.n() as f64;
    let prior = stats.prior();
    let one_plus_x2 = 1.0 + stats.xbar2();
    let a = prior.beta2 / n * stats.xbar4();
    let b = stats.xbar5() / n - one_plus_x2 * stats.xbar1();
    let c = (prior.alpha2 - 1.0) / n * stats.xbar3() - one_plus_x2;
    (a, b, c)
}

/// ∂log π/∂σ = nμ/σ − μnX̄₁ + (α₂ − 1)/σ − β₂.
pub fn sigma_equation_residual(stats: &SampleStats, mu: f64, sigma: f64) -> f64 {
    let n = stats.n() as f64;
    let p = stats.prior();
    n * mu / sigma - mu * n * stats.xbar1() + (p.alpha2 - 1.0) / sigma - p.beta2
}

/// n·[1 + X̄₂ − μ(σX̄₄ − X̄₃)], the transformation-parameter equation in
/// its prior-free limit.
pub fn p_equation_residual(stats: &SampleStats, mu: f64, sigma: f64) -> f64 {
    stats.n() as f64 * (1.0 + stats.xbar2() - mu * (sigma * stats.xbar4() - stats.xbar3()))
}

/// μ as a function of σ.
pub fn mu_of_sigma(stats: &SampleStats, sigma: f64) -> Result<f64, EstimateError> {
    let denominator = sigma * stats.xbar4() - stats.xbar3();
    if !(denominator > 0.0) {
        return Err(EstimateError::DegenerateDenominator { denominator });
    }
    let mu = (1.0 + stats.xbar2()) / denominator;
    if mu > 0.0 && mu.is_finite() {
        Ok(mu)
    } else {
        Err(EstimateError::NonpositiveEstimate { value: mu })
    }
}

/// σ̂ and the discriminant it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaRoot {
    pub sigma: f64,
    pub discriminant: f64,
}

/// Below this β₂ the quadratic term is dropped and q(σ) = 0 solved as linear.
pub const LINEAR_LIMIT_BETA2: f64 = 1e-14;

pub fn estimate_sigma(stats: &SampleStats) -> Result<SigmaRoot, EstimateError> {
    if stats.xbar4() == 0.0 {
        return Err(EstimateError::ZeroQuadraticCoefficient);
    }
    let (a, b, c) = sigma_quadratic(stats);
    if stats.prior().beta2 < LINEAR_LIMIT_BETA2 {
        let sigma = c / b;
        return if sigma > 0.0 && sigma.is_finite() {
            Ok(SigmaRoot { sigma, discriminant: b * b })
        } else {
            Err(EstimateError::NonpositiveRoot { plus_root: sigma, minus_root: f64::NAN })
        };
    }
    let discriminant = b * b - 4.0 * a * c;
    if discriminant < 0.0 || discriminant.is_nan() {
        return Err(EstimateError::NegativeDiscriminant { discriminant });
    }
    let sq = discriminant.sqrt();
    // (b + √D) / 2a == 2c / (b − √D)
    let (plus, minus) = if b < 0.0 {
        (2.0 * c / (b - sq), (b - sq) / (2.0 * a))
    } else {
        ((b + sq) / (2.0 * a), 2.0 * c / (b + sq))
    };
    if plus > 0.0 && plus.is_finite() {
        Ok(SigmaRoot { sigma: plus, discriminant })
    } else {
        Err(EstimateError::NonpositiveRoot { plus_root: plus, minus_root: minus })
    }
}

pub fn estimate_mu(stats: &SampleStats, sigma_hat: f64) -> Result<f64, EstimateError> {
    mu_of_sigma(stats, sigma_hat)
}

/// Both closed-form estimates from precomputed statistics.
pub fn closed_form(stats: &SampleStats) -> Result<Estimate, EstimateError> {
    let root = estimate_sigma(stats)?;
    let mu = estimate_mu(stats, root.sigma)?;
    Ok(Estimate {
        mu: Some(mu),
        sigma: Some(root.sigma),
        method: Method::ClosedForm,
        diagnostics: Diagnostics {
            discriminant: Some(root.discriminant),
            residual_sigma_eq: sigma_equation_residual(stats, mu, root.sigma),
            residual_mu_eq: p_equation_residual(stats, mu, root.sigma),
            mu_score: None,
        },
    })
}

/// Closed forms for T(x) = x^(−s).
pub fn estimate_power(sample: &[f64], s: f64, prior: SigmaPrior) -> Result<Estimate, EstimateError> {
    let stats = power_stats(sample, s, prior)?;
    let mut est = closed_form(&stats)?;
    est.method = Method::ClosedFormPower;
    Ok(est)
}

/// Statistics for `g`, routed through the power formulas when `g` is a
/// pure power.
pub fn stats_for(g: &Generator, sample: &[f64], prior: SigmaPrior) -> Result<SampleStats, StatsError> {
    match g.power_exponent() {
        Some(k) => power_stats(sample, -k, prior),
        None => compute_stats(g, sample, prior),
    }
}

/// Free (μ, σ) closed-form estimate for any generator; pure powers take
/// the power path.
pub fn estimate_free(g: &Generator, sample: &[f64], prior: SigmaPrior) -> Result<Estimate, EstimateError> {
    match g.power_exponent() {
        Some(k) => estimate_power(sample, -k, prior),
        None => closed_form(&compute_stats(g, sample, prior)?),
    }
}

/// σ̂ with μ = μ₀ known: [(1 + X̄₂)/μ₀ + X̄₃] / X̄₄.
pub fn estimate_sigma_fixed_mu(stats: &SampleStats, mu0: f64) -> Result<f64, EstimateError> {
    if stats.xbar4() == 0.0 {
        return Err(EstimateError::ZeroXbar4);
    }
    let sigma = ((1.0 + stats.xbar2()) / mu0 + stats.xbar3()) / stats.xbar4();
    if sigma > 0.0 && sigma.is_finite() {
        Ok(sigma)
    } else {
        Err(EstimateError::NonpositiveEstimate { value: sigma })
    }
}

/// μ̂ with σ = σ₀ known.
pub fn estimate_mu_fixed_sigma(stats: &SampleStats, sigma0: f64) -> Result<f64, EstimateError> {
    mu_of_sigma(stats, sigma0)
}

/// Solves μ[g(μ)X̄₄ − X̄₃] = 1 + X̄₂. Reciprocal links g(μ) = c/μ have the
/// closed form μ̂ = (cX̄₄ − 1 − X̄₂)/X̄₃; anything else is bisected.
pub fn estimate_mu_linked(stats: &SampleStats, link: &SigmaLink) -> Result<f64, EstimateError> {
    match link {
        SigmaLink::Reciprocal { c } => {
            if stats.xbar3() == 0.0 {
                return Err(EstimateError::ZeroLogMean);
            }
            let mu = (c * stats.xbar4() - 1.0 - stats.xbar2()) / stats.xbar3();
            if mu > 0.0 && mu.is_finite() {
                Ok(mu)
            } else {
                Err(EstimateError::NonpositiveEstimate { value: mu })
            }
        }
        SigmaLink::Custom(g) => solve_linked(stats, g.as_ref()),
    }
}

/// Bisection in log μ on [1e-8, 1e8] for the linked equation.
pub fn solve_linked(stats: &SampleStats, g: &dyn Fn(f64) -> f64) -> Result<f64, EstimateError> {
    let rhs = 1.0 + stats.xbar2();
    let f = |mu: f64| mu * (g(mu) * stats.xbar4() - stats.xbar3()) - rhs;
    let (mut lo, mut hi) = (1e-8f64, 1e8f64);
    let (f_lo, f_hi) = (f(lo), f(hi));
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo.signum() == f_hi.signum() {
        return Err(EstimateError::NoSignChange);
    }
    if f_lo == 0.0 {
        return Ok(lo);
    }
    let lo_negative = f_lo < 0.0;
    for _ in 0..4096 {
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { lo + 0.5 * (hi - lo) };
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if (fm < 0.0) == lo_negative {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(if f(lo).abs() <= f(hi).abs() { lo } else { hi })
}

/// Closed-form estimate honoring a registry row's constraint.
pub fn estimate_constrained(
    g: &Generator,
    constraint: &Constraint,
    sample: &[f64],
    prior: SigmaPrior,
) -> Result<Estimate, EstimateError> {
    if let Constraint::Free = constraint {
        return estimate_free(g, sample, prior);
    }
    let stats = stats_for(g, sample, prior)?;
    let (mu, sigma, method) = match constraint {
        Constraint::Free => unreachable!(),
        Constraint::MuFixed(mu0) => (*mu0, estimate_sigma_fixed_mu(&stats, *mu0)?, Method::FixedMu),
        Constraint::SigmaFixed(s0) => (estimate_mu_fixed_sigma(&stats, *s0)?, *s0, Method::FixedSigma),
        Constraint::Linked(link) => {
            let mu = estimate_mu_linked(&stats, link)?;
            (mu, link.eval(mu), Method::Linked)
        }
    };
    Ok(Estimate {
        mu: (!matches!(method, Method::FixedMu)).then_some(mu),
        sigma: (!matches!(method, Method::FixedSigma)).then_some(sigma),
        method,
        diagnostics: Diagnostics {
            discriminant: None,
            residual_sigma_eq: sigma_equation_residual(&stats, mu, sigma),
            residual_mu_eq: p_equation_residual(&stats, mu, sigma),
            mu_score: None,
        },
    })
}
