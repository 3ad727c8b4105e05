//! Iterative MAP and ML fits of (μ, σ), the comparison methods for the
//! closed forms.
//!
//! The log-likelihood of the family is
//!
//! ```text
//! Σ [ μ log(μσ) − ln Γ(μ) + log|T′(xᵢ)| + (μ − 1) log T(xᵢ) − μσT(xᵢ) ]
//! ```
//!
//! and only depends on the sample through n, ΣT, Σlog T and Σlog|T′|, which
//! are computed once per fit. Optimization runs in (log μ, log σ): a
//! Nelder–Mead pass from the initial point, then Newton steps on the
//! analytic score with a central-difference Hessian.

use thiserror::Error;

use crate::estimators::{estimate_constrained, Diagnostics, Estimate, Method};
use crate::generators::{Constraint, Generator, GeneratorError, SigmaLink};
use crate::optimize::{nelder_mead, NelderMeadOptions};
use crate::special::{digamma, ln_gamma, SpecialError};
use crate::statistics::{CompensatedSum, HyperParams};

/// Gradient-norm tolerance for convergence.
pub const GRADIENT_TOL: f64 = 1e-8;
/// Iteration budget shared by the simplex and Newton phases.
pub const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("numeric fits need at least 2 observations, got {0}")]
    SampleTooSmall(usize),
    #[error("observation {index} = {value} is outside the generator domain: {source}")]
    Domain { index: usize, value: f64, source: GeneratorError },
    #[error("parameters must be positive and finite (mu {mu}, sigma {sigma})")]
    InvalidParameters { mu: f64, sigma: f64 },
    #[error("objective is not finite at (mu {mu}, sigma {sigma})")]
    NonFinite { mu: f64, sigma: f64 },
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// The hyperparameters under which the log-posterior is the log-likelihood.
pub const FLAT: HyperParams = HyperParams { alpha1: 1.0, beta1: 0.0, alpha2: 1.0, beta2: 0.0 };

/// Sufficient sums of a sample under a generator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodSummary {
    pub n: usize,
    pub sum_t: f64,
    pub sum_ln_t: f64,
    pub sum_ln_abs_dt: f64,
}

impl LikelihoodSummary {
    pub fn new(g: &Generator, sample: &[f64]) -> Result<Self, BaselineError> {
        let mut sum_t = CompensatedSum::default();
        let mut sum_ln_t = CompensatedSum::default();
        let mut sum_ln_dt = CompensatedSum::default();
        for (index, &x) in sample.iter().enumerate() {
            let v = g.evaluate(x).map_err(|source| BaselineError::Domain { index, value: x, source })?;
            sum_t.add(v.t);
            sum_ln_t.add(v.t.ln());
            sum_ln_dt.add(v.dt.abs().ln());
        }
        Ok(Self { n: sample.len(), sum_t: sum_t.total(), sum_ln_t: sum_ln_t.total(), sum_ln_abs_dt: sum_ln_dt.total() })
    }

    pub fn log_likelihood(&self, mu: f64, sigma: f64) -> Result<f64, BaselineError> {
        check(mu, sigma)?;
        let n = self.n as f64;
        let v = n * (mu * (mu * sigma).ln() - ln_gamma(mu)?) + self.sum_ln_abs_dt + (mu - 1.0) * self.sum_ln_t
            - mu * sigma * self.sum_t;
        finite(v, mu, sigma)
    }

    pub fn log_posterior(&self, mu: f64, sigma: f64, hp: &HyperParams) -> Result<f64, BaselineError> {
        let v = self.log_likelihood(mu, sigma)? + (hp.alpha1 - 1.0) * mu.ln() - hp.beta1 * mu
            + (hp.alpha2 - 1.0) * sigma.ln()
            - hp.beta2 * sigma;
        finite(v, mu, sigma)
    }

    /// (∂/∂μ, ∂/∂σ) of the log-posterior.
    pub fn score(&self, mu: f64, sigma: f64, hp: &HyperParams) -> Result<(f64, f64), BaselineError> {
        check(mu, sigma)?;
        let n = self.n as f64;
        let d_mu = n * (mu * sigma).ln() + n - n * digamma(mu)? + self.sum_ln_t - sigma * self.sum_t
            + (hp.alpha1 - 1.0) / mu
            - hp.beta1;
        let d_sigma = n * mu / sigma - mu * self.sum_t + (hp.alpha2 - 1.0) / sigma - hp.beta2;
        Ok((d_mu, d_sigma))
    }
}

fn check(mu: f64, sigma: f64) -> Result<(), BaselineError> {
    if mu > 0.0 && sigma > 0.0 && mu.is_finite() && sigma.is_finite() {
        Ok(())
    } else {
        Err(BaselineError::InvalidParameters { mu, sigma })
    }
}

fn finite(v: f64, mu: f64, sigma: f64) -> Result<f64, BaselineError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(BaselineError::NonFinite { mu, sigma })
    }
}

pub fn log_likelihood(g: &Generator, sample: &[f64], mu: f64, sigma: f64) -> Result<f64, BaselineError> {
    LikelihoodSummary::new(g, sample)?.log_likelihood(mu, sigma)
}

pub fn log_posterior(g: &Generator, sample: &[f64], mu: f64, sigma: f64, hp: &HyperParams) -> Result<f64, BaselineError> {
    LikelihoodSummary::new(g, sample)?.log_posterior(mu, sigma, hp)
}

pub fn score(g: &Generator, sample: &[f64], mu: f64, sigma: f64, hp: &HyperParams) -> Result<(f64, f64), BaselineError> {
    LikelihoodSummary::new(g, sample)?.score(mu, sigma, hp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerReport {
    pub converged: bool,
    pub iterations: usize,
    pub final_gradient_norm: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericFit {
    pub estimate: Estimate,
    pub report: OptimizerReport,
}

/// Maps the free coordinates (log scale) to (μ, σ) for a constraint.
struct Parametrization<'a> {
    constraint: &'a Constraint,
}

impl Parametrization<'_> {
    fn to_params(&self, theta: &[f64]) -> (f64, f64) {
        match self.constraint {
            Constraint::Free => (theta[0].exp(), theta[1].exp()),
            Constraint::MuFixed(m) => (*m, theta[0].exp()),
            Constraint::SigmaFixed(s) => (theta[0].exp(), *s),
            Constraint::Linked(link) => {
                let mu = theta[0].exp();
                (mu, link.eval(mu))
            }
        }
    }

    fn to_theta(&self, mu: f64, sigma: f64) -> Vec<f64> {
        match self.constraint {
            Constraint::Free => vec![mu.ln(), sigma.ln()],
            Constraint::MuFixed(_) => vec![sigma.ln()],
            _ => vec![mu.ln()],
        }
    }

    /// Score in the free directions of the original (μ, σ) coordinates.
    fn reduced_score(&self, mu: f64, d_mu: f64, d_sigma: f64) -> Vec<f64> {
        match self.constraint {
            Constraint::Free => vec![d_mu, d_sigma],
            Constraint::MuFixed(_) => vec![d_sigma],
            Constraint::SigmaFixed(_) => vec![d_mu],
            Constraint::Linked(link) => vec![d_mu + d_sigma * link_slope(link, mu)],
        }
    }

    /// Gradient with respect to θ.
    fn theta_gradient(&self, mu: f64, sigma: f64, d_mu: f64, d_sigma: f64) -> Vec<f64> {
        match self.constraint {
            Constraint::Free => vec![mu * d_mu, sigma * d_sigma],
            Constraint::MuFixed(_) => vec![sigma * d_sigma],
            _ => self.reduced_score(mu, d_mu, d_sigma).into_iter().map(|g| mu * g).collect(),
        }
    }
}

fn link_slope(link: &SigmaLink, mu: f64) -> f64 {
    match link {
        SigmaLink::Reciprocal { c } => -c / (mu * mu),
        SigmaLink::Custom(g) => {
            let h = 1e-6 * mu;
            (g(mu + h) - g(mu - h)) / (2.0 * h)
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves the 1×1 or 2×2 system H δ = −g.
fn newton_direction(h: &[[f64; 2]; 2], g: &[f64]) -> Option<Vec<f64>> {
    if g.len() == 1 {
        let d = -g[0] / h[0][0];
        return d.is_finite().then(|| vec![d]);
    }
    let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
    let d0 = -(g[0] * h[1][1] - g[1] * h[0][1]) / det;
    let d1 = -(h[0][0] * g[1] - h[1][0] * g[0]) / det;
    (d0.is_finite() && d1.is_finite()).then(|| vec![d0, d1])
}

/// Initial point: closed form when it succeeds, else moments of T(X).
fn initial_point(
    g: &Generator,
    constraint: &Constraint,
    sample: &[f64],
    hp: &HyperParams,
    summary: &LikelihoodSummary,
) -> (f64, f64) {
    if let Ok(e) = estimate_constrained(g, constraint, sample, hp.sigma_prior()) {
        let (mu, sigma) = fill(constraint, e.mu, e.sigma);
        if check(mu, sigma).is_ok() {
            return (mu, sigma);
        }
    }
    let n = summary.n as f64;
    let m = summary.sum_t / n;
    let ts: Vec<f64> = sample.iter().filter_map(|&x| g.t(x).ok()).collect();
    let v = ts.iter().map(|t| (t - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let mu = if v > 0.0 && (m * m / v).is_finite() { m * m / v } else { 1.0 };
    let sigma = 1.0 / m;
    let p = Parametrization { constraint };
    let theta = p.to_theta(mu, sigma);
    p.to_params(&theta)
}

fn fill(constraint: &Constraint, mu: Option<f64>, sigma: Option<f64>) -> (f64, f64) {
    match constraint {
        Constraint::MuFixed(m) => (*m, sigma.unwrap_or(f64::NAN)),
        Constraint::SigmaFixed(s) => (mu.unwrap_or(f64::NAN), *s),
        _ => (mu.unwrap_or(f64::NAN), sigma.unwrap_or(f64::NAN)),
    }
}

/// Numeric MAP fit under the row's constraint.
pub fn fit_map_numeric(
    g: &Generator,
    constraint: &Constraint,
    sample: &[f64],
    hp: &HyperParams,
    init: Option<(f64, f64)>,
) -> Result<NumericFit, BaselineError> {
    fit(g, constraint, sample, hp, init, Method::MapNumeric)
}

/// Numeric ML fit: the MAP fit with flat priors.
pub fn fit_ml_numeric(
    g: &Generator,
    constraint: &Constraint,
    sample: &[f64],
    init: Option<(f64, f64)>,
) -> Result<NumericFit, BaselineError> {
    fit(g, constraint, sample, &FLAT, init, Method::MlNumeric)
}

fn fit(
    g: &Generator,
    constraint: &Constraint,
    sample: &[f64],
    hp: &HyperParams,
    init: Option<(f64, f64)>,
    method: Method,
) -> Result<NumericFit, BaselineError> {
    if sample.len() < 2 {
        return Err(BaselineError::SampleTooSmall(sample.len()));
    }
    let summary = LikelihoodSummary::new(g, sample)?;
    let p = Parametrization { constraint };
    let (mu0, sigma0) = match init {
        Some((m, s)) => {
            check(m, s)?;
            let theta = p.to_theta(m, s);
            p.to_params(&theta)
        }
        None => initial_point(g, constraint, sample, hp, &summary),
    };

    let grad_at = |theta: &[f64]| -> Result<(Vec<f64>, Vec<f64>), BaselineError> {
        let (mu, sigma) = p.to_params(theta);
        let (dm, ds) = summary.score(mu, sigma, hp)?;
        Ok((p.theta_gradient(mu, sigma, dm, ds), p.reduced_score(mu, dm, ds)))
    };

    let mut theta = p.to_theta(mu0, sigma0);
    let mut iterations = 0;
    let (_, mut score) = grad_at(&theta)?;

    if norm(&score) > GRADIENT_TOL {
        let objective = |t: &[f64]| {
            let (mu, sigma) = p.to_params(t);
            summary.log_posterior(mu, sigma, hp).map(|v| -v).unwrap_or(f64::INFINITY)
        };
        let nm = nelder_mead(objective, &theta, NelderMeadOptions { max_iter: MAX_ITERATIONS / 2, ..Default::default() });
        if nm.fx.is_finite() && nm.fx <= objective(&theta) {
            theta = nm.x;
        }
        iterations += nm.iterations;
        score = grad_at(&theta)?.1;

        while norm(&score) > GRADIENT_TOL && iterations < MAX_ITERATIONS {
            iterations += 1;
            let (grad, _) = grad_at(&theta)?;
            let hess = theta_hessian(&theta, &grad_at)?;
            let ascent = hess[0][0] < 0.0 && (theta.len() == 1 || hess[0][0] * hess[1][1] - hess[0][1] * hess[1][0] > 0.0);
            let dir = match newton_direction(&hess, &grad) {
                Some(d) if ascent => d,
                _ => grad.iter().map(|x| 1e-3 * x).collect(),
            };
            let current = norm(&score);
            let mut t = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let cand: Vec<f64> = theta.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
                if let Ok((_, s)) = grad_at(&cand) {
                    if norm(&s) < current {
                        theta = cand;
                        score = s;
                        moved = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }

    let (mu, sigma) = p.to_params(&theta);
    let objective = summary.log_posterior(mu, sigma, hp)?;
    let (d_mu, d_sigma) = summary.score(mu, sigma, hp)?;
    let gradient_norm = norm(&score);
    let estimate = Estimate {
        mu: (!matches!(constraint, Constraint::MuFixed(_))).then_some(mu),
        sigma: (!matches!(constraint, Constraint::SigmaFixed(_))).then_some(sigma),
        method,
        diagnostics: Diagnostics { discriminant: None, residual_sigma_eq: d_sigma, residual_mu_eq: d_mu, mu_score: Some(d_mu) },
    };
    Ok(NumericFit {
        estimate,
        report: OptimizerReport {
            converged: gradient_norm <= GRADIENT_TOL,
            iterations,
            final_gradient_norm: gradient_norm,
            objective,
        },
    })
}

/// θ ↦ (θ-gradient, score in the free directions).
type GradientFn<'a> = dyn Fn(&[f64]) -> Result<(Vec<f64>, Vec<f64>), BaselineError> + 'a;

/// Central-difference Hessian of the θ-gradient, symmetrized.
fn theta_hessian(
    theta: &[f64],
    grad_at: &GradientFn<'_>,
) -> Result<[[f64; 2]; 2], BaselineError> {
    let d = theta.len();
    let h = 1e-5;
    let mut hess = [[0.0; 2]; 2];
    for j in 0..d {
        let mut up = theta.to_vec();
        let mut down = theta.to_vec();
        up[j] += h;
        down[j] -= h;
        let (gu, _) = grad_at(&up)?;
        let (gd, _) = grad_at(&down)?;
        for i in 0..d {
            hess[i][j] = (gu[i] - gd[i]) / (2.0 * h);
        }
    }
    if d == 2 {
        let off = 0.5 * (hess[0][1] + hess[1][0]);
        hess[0][1] = off;
        hess[1][0] = off;
    }
    Ok(hess)
}
