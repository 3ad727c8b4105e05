//! Generators T and the registry of named distributions built on them.
//!
//! A generator is a strictly monotone, twice differentiable map
//! T: (0, ∞) → (0, ∞). The family density is
//!
//! ```text
//! f(x; μ, σ) = (μσ)^μ / Γ(μ) · |T′(x)| · T(x)^(μ−1) · exp(−μσ T(x))
//! ```
//!
//! so that T(X) ~ Gamma(shape μ, rate μσ). Every registry row fixes T (up
//! to known shape constants) and maps the row's conventional parameters
//! onto the canonical pair (μ, σ).
//!
//! Derivatives are returned with their sign: rows whose T is decreasing
//! (inverse gamma, inverse Weibull, Dagum, ...) report T′ < 0. Densities
//! use |T′|; the h-statistics use the signed value, which is what makes the
//! power-generator estimators come out in their simplified form.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::special::{self, SpecialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeneratorError {
    #[error("unknown distribution `{0}`")]
    UnknownDistribution(String),
    #[error("distribution `{dist}` requires parameter `{param}`")]
    MissingParameter { dist: String, param: String },
    #[error("distribution `{dist}` has no parameter `{param}`")]
    UnexpectedParameter { dist: String, param: String },
    #[error("parameter `{param}` must be positive and finite, got {value}")]
    NonPositiveParameter { param: String, value: f64 },
    #[error("Nakagami shape m must be at least 1/2, got {0}")]
    NakagamiShape(f64),
    #[error("x = {0} is outside the generator domain (0, ∞)")]
    Domain(f64),
    #[error("generator evaluation left the representable range at x = {0}")]
    NumericRange(f64),
    #[error("u = {0} is outside the range of T")]
    OutOfRange(f64),
    #[error("bracketing root-find for T⁻¹({0}) failed")]
    BracketFailure(f64),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

/// The generator T, one variant per functional form in the registry.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    /// T(x) = x^k with k ≠ 0. In the closed-form literature this is written
    /// x^(−s), i.e. `k = −s`.
    Power { k: f64 },
    /// T(x) = [exp(z) − 1]^δ, z = x (or 1/x when `reciprocal`).
    ExpM1Power { delta: f64, reciprocal: bool },
    /// T(x) = log^δ(z + 1), z = x (or 1/x when `reciprocal`).
    Log1pPower { delta: f64, reciprocal: bool },
    /// T(x) = exp(δ (x − 1/x)).
    ExpDifference { delta: f64 },
    /// T(x) = x^δ [exp(x) − 1]^δ.
    ExtendedLog { delta: f64 },
    /// T(x) = exp(δx) − 1.
    Gompertz { delta: f64 },
    /// T(x) = exp[(x/α)^β] − 1.
    ModifiedWeibullExtension { alpha: f64, beta: f64 },
    /// T(x) = x^b [exp(c x^d) − 1].
    TraditionalWeibull { b: f64, c: f64, d: f64 },
    /// T(x) = exp(bx − c/x).
    FlexibleWeibull { b: f64, c: f64 },
    /// T(x) = log(x^c + 1).
    BurrXii { c: f64 },
    /// T(x) = log(x^(−c) + 1).
    Dagum { c: f64 },
}

/// T and its first two derivatives at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorValue {
    pub t: f64,
    pub dt: f64,
    pub d2t: f64,
}

/// log(e^z − 1) without overflow for large z.
fn ln_expm1(z: f64) -> f64 {
    if z > 40.0 {
        z + (-(-z).exp()).ln_1p()
    } else {
        z.exp_m1().ln()
    }
}

/// e^z / (e^z − 1), the log-derivative of e^z − 1.
fn expm1_log_derivative(z: f64) -> f64 {
    -1.0 / (-z).exp_m1()
}

/// Given F′/F and F″/F of some base F at z, return T′/T and T″/T of
/// T(x) = F(1/x) where z = 1/x.
fn reciprocal_ratios(z: f64, r1: f64, r2: f64) -> (f64, f64) {
    let z2 = z * z;
    (-r1 * z2, r2 * z2 * z2 + 2.0 * r1 * z2 * z)
}

/// Ratios for φ^δ given φ′/φ and φ″/φ.
fn power_of_ratios(delta: f64, q1: f64, q2: f64) -> (f64, f64) {
    (delta * q1, delta * ((delta - 1.0) * q1 * q1 + q2))
}

impl Generator {
    /// Registry-independent identifier of the functional form.
    pub fn name(&self) -> &'static str {
        match self {
            Generator::Power { .. } => "power",
            Generator::ExpM1Power { reciprocal: false, .. } => "expm1_power",
            Generator::ExpM1Power { reciprocal: true, .. } => "expm1_power_reciprocal",
            Generator::Log1pPower { reciprocal: false, .. } => "log1p_power",
            Generator::Log1pPower { reciprocal: true, .. } => "log1p_power_reciprocal",
            Generator::ExpDifference { .. } => "exp_difference",
            Generator::ExtendedLog { .. } => "extended_log",
            Generator::Gompertz { .. } => "gompertz",
            Generator::ModifiedWeibullExtension { .. } => "modified_weibull_extension",
            Generator::TraditionalWeibull { .. } => "traditional_weibull",
            Generator::FlexibleWeibull { .. } => "flexible_weibull",
            Generator::BurrXii { .. } => "burr_xii",
            Generator::Dagum { .. } => "dagum",
        }
    }

    /// The known constants inside T.
    pub fn shape_params(&self) -> Vec<(&'static str, f64)> {
        match *self {
            Generator::Power { k } => vec![("k", k)],
            Generator::ExpM1Power { delta, .. }
            | Generator::Log1pPower { delta, .. }
            | Generator::ExpDifference { delta }
            | Generator::ExtendedLog { delta }
            | Generator::Gompertz { delta } => vec![("delta", delta)],
            Generator::ModifiedWeibullExtension { alpha, beta } => vec![("alpha", alpha), ("beta", beta)],
            Generator::TraditionalWeibull { b, c, d } => vec![("b", b), ("c", c), ("d", d)],
            Generator::FlexibleWeibull { b, c } => vec![("b", b), ("c", c)],
            Generator::BurrXii { c } | Generator::Dagum { c } => vec![("c", c)],
        }
    }

    /// Exponent k when T(x) = x^k.
    pub fn power_exponent(&self) -> Option<f64> {
        match *self {
            Generator::Power { k } => Some(k),
            _ => None,
        }
    }

    pub fn is_increasing(&self) -> bool {
        match *self {
            Generator::Power { k } => k > 0.0,
            Generator::ExpM1Power { reciprocal, .. } | Generator::Log1pPower { reciprocal, .. } => !reciprocal,
            Generator::Dagum { .. } => false,
            _ => true,
        }
    }

    fn check_domain(x: f64) -> Result<(), GeneratorError> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            Err(GeneratorError::Domain(x))
        }
    }

    /// T, T′ and T″ at `x`. Any non-finite result, or T numerically zero,
    /// is reported as [`GeneratorError::NumericRange`].
    pub fn evaluate(&self, x: f64) -> Result<GeneratorValue, GeneratorError> {
        Self::check_domain(x)?;
        let v = self.evaluate_unchecked(x);
        if v.t.is_finite() && v.t > 0.0 && v.dt.is_finite() && v.d2t.is_finite() {
            Ok(v)
        } else {
            Err(GeneratorError::NumericRange(x))
        }
    }

    fn evaluate_unchecked(&self, x: f64) -> GeneratorValue {
        match *self {
            Generator::Power { k } => GeneratorValue {
                t: x.powf(k),
                dt: k * x.powf(k - 1.0),
                d2t: k * (k - 1.0) * x.powf(k - 2.0),
            },
            Generator::ExpM1Power { delta, reciprocal } => {
                let z = if reciprocal { 1.0 / x } else { x };
                let t = (delta * ln_expm1(z)).exp();
                let q = expm1_log_derivative(z);
                let (mut r1, mut r2) = power_of_ratios(delta, q, q);
                if reciprocal {
                    (r1, r2) = reciprocal_ratios(z, r1, r2);
                }
                GeneratorValue { t, dt: t * r1, d2t: t * r2 }
            }
            Generator::Log1pPower { delta, reciprocal } => {
                let z = if reciprocal { 1.0 / x } else { x };
                let l = z.ln_1p();
                let t = l.powf(delta);
                let q1 = 1.0 / ((1.0 + z) * l);
                let q2 = -q1 / (1.0 + z);
                let (mut r1, mut r2) = power_of_ratios(delta, q1, q2);
                if reciprocal {
                    (r1, r2) = reciprocal_ratios(z, r1, r2);
                }
                GeneratorValue { t, dt: t * r1, d2t: t * r2 }
            }
            Generator::ExpDifference { delta } => {
                let t = (delta * (x - 1.0 / x)).exp();
                let r1 = delta * (1.0 + 1.0 / (x * x));
                let r2 = r1 * r1 - 2.0 * delta / (x * x * x);
                GeneratorValue { t, dt: t * r1, d2t: t * r2 }
            }
            Generator::ExtendedLog { delta } => {
                let t = (delta * (x.ln() + ln_expm1(x))).exp();
                let q = expm1_log_derivative(x);
                let q1 = 1.0 / x + q;
                let q2 = (2.0 + x) * q / x;
                let (r1, r2) = power_of_ratios(delta, q1, q2);
                GeneratorValue { t, dt: t * r1, d2t: t * r2 }
            }
            Generator::Gompertz { delta } => {
                let e = (delta * x).exp();
                GeneratorValue {
                    t: (delta * x).exp_m1(),
                    dt: delta * e,
                    d2t: delta * delta * e,
                }
            }
            Generator::ModifiedWeibullExtension { alpha, beta } => {
                let y = (x / alpha).powf(beta);
                let e = y.exp();
                let dy = beta * y / x;
                let d2y = beta * (beta - 1.0) * y / (x * x);
                GeneratorValue {
                    t: y.exp_m1(),
                    dt: e * dy,
                    d2t: e * (dy * dy + d2y),
                }
            }
            Generator::TraditionalWeibull { b, c, d } => {
                let y = c * x.powf(d);
                let t = (b * x.ln() + ln_expm1(y)).exp();
                let a1 = b / x;
                let a2 = b * (b - 1.0) / (x * x);
                let q = expm1_log_derivative(y);
                let dy = d * y / x;
                let d2y = d * (d - 1.0) * y / (x * x);
                let b1 = q * dy;
                let b2 = q * (dy * dy + d2y);
                let r1 = a1 + b1;
                let r2 = a2 + 2.0 * a1 * b1 + b2;
                GeneratorValue { t, dt: t * r1, d2t: t * r2 }
            }
            Generator::FlexibleWeibull { b, c } => {
                let t = (b * x - c / x).exp();
                let r1 = b + c / (x * x);
                let r2 = r1 * r1 - 2.0 * c / (x * x * x);
                GeneratorValue { t, dt: t * r1, d2t: t * r2 }
            }
            Generator::BurrXii { c } => Self::burr(c, x, false),
            Generator::Dagum { c } => Self::burr(c, x, true),
        }
    }

    /// log(z^c + 1) at z = x, or at z = 1/x for the Dagum row.
    fn burr(c: f64, x: f64, reciprocal: bool) -> GeneratorValue {
        let z = if reciprocal { 1.0 / x } else { x };
        let zc = z.powf(c);
        let t = if zc.is_finite() {
            zc.ln_1p()
        } else {
            c * z.ln() + z.powf(-c).ln_1p()
        };
        // derivatives of log(1 + z^c) with respect to z
        let (w, v) = if zc.is_finite() { (zc / (1.0 + zc), (c - 1.0 - zc) / (1.0 + zc)) } else { (1.0, -1.0) };
        let f1 = c * w / z;
        let f2 = c * w * v / (z * z);
        if reciprocal {
            let z2 = z * z;
            GeneratorValue { t, dt: -f1 * z2, d2t: f2 * z2 * z2 + 2.0 * f1 * z2 * z }
        } else {
            GeneratorValue { t, dt: f1, d2t: f2 }
        }
    }

    pub fn t(&self, x: f64) -> Result<f64, GeneratorError> {
        Ok(self.evaluate(x)?.t)
    }

    /// Signed first derivative.
    pub fn t_prime(&self, x: f64) -> Result<f64, GeneratorError> {
        Ok(self.evaluate(x)?.dt)
    }

    pub fn t_second(&self, x: f64) -> Result<f64, GeneratorError> {
        Ok(self.evaluate(x)?.d2t)
    }

    /// T⁻¹(u). Closed form where one exists, bracketed bisection otherwise.
    pub fn t_inverse(&self, u: f64) -> Result<f64, GeneratorError> {
        if !(u > 0.0 && u.is_finite()) {
            return Err(GeneratorError::OutOfRange(u));
        }
        let x = match *self {
            Generator::Power { k } => u.powf(1.0 / k),
            Generator::ExpM1Power { delta, reciprocal } => {
                let z = u.powf(1.0 / delta).ln_1p();
                if reciprocal {
                    1.0 / z
                } else {
                    z
                }
            }
            Generator::Log1pPower { delta, reciprocal } => {
                let z = u.powf(1.0 / delta).exp_m1();
                if reciprocal {
                    1.0 / z
                } else {
                    z
                }
            }
            Generator::ExpDifference { delta } => positive_quadratic_root(1.0, u.ln() / delta, 1.0),
            Generator::Gompertz { delta } => u.ln_1p() / delta,
            Generator::ModifiedWeibullExtension { alpha, beta } => alpha * u.ln_1p().powf(1.0 / beta),
            Generator::FlexibleWeibull { b, c } => positive_quadratic_root(b, u.ln(), c),
            Generator::BurrXii { c } => u.exp_m1().powf(1.0 / c),
            Generator::Dagum { c } => u.exp_m1().powf(-1.0 / c),
            Generator::ExtendedLog { .. } | Generator::TraditionalWeibull { .. } => return self.bisect_inverse(u),
        };
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(GeneratorError::OutOfRange(u))
        }
    }

    /// Bisection for the increasing rows without an analytic inverse.
    /// Overflowing evaluations count as "above u".
    fn bisect_inverse(&self, u: f64) -> Result<f64, GeneratorError> {
        let t = |x: f64| {
            let v = self.evaluate_unchecked(x).t;
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };
        let mut lo = 1e-12;
        let mut hi = 1e12;
        while t(lo) >= u {
            lo *= 1e-6;
            if lo < 1e-300 {
                return Err(GeneratorError::BracketFailure(u));
            }
        }
        while t(hi) < u {
            hi *= 1e6;
            if hi > 1e300 {
                return Err(GeneratorError::BracketFailure(u));
            }
        }
        for _ in 0..4096 {
            let mid = if hi > 4.0 * lo { (lo.ln() + 0.5 * (hi.ln() - lo.ln())).exp() } else { lo + 0.5 * (hi - lo) };
            if mid <= lo || mid >= hi {
                let (tl, th) = (t(lo), t(hi));
                return Ok(if (u - tl).abs() <= (th - u).abs() { lo } else { hi });
            }
            if t(mid) < u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Err(GeneratorError::BracketFailure(u))
    }

    /// Log-density of the family with canonical parameters (μ, σ).
    pub fn ln_density(&self, x: f64, mu: f64, sigma: f64) -> Result<f64, GeneratorError> {
        let v = self.evaluate(x)?;
        Ok(mu * (mu * sigma).ln() - special::ln_gamma(mu)? + v.dt.abs().ln() + (mu - 1.0) * v.t.ln()
            - mu * sigma * v.t)
    }
}

/// Positive root of a x² − w x − c = 0 for a, c > 0, written to avoid
/// cancellation for either sign of w.
fn positive_quadratic_root(a: f64, w: f64, c: f64) -> f64 {
    let disc = (w * w + 4.0 * a * c).sqrt();
    if w >= 0.0 {
        (w + disc) / (2.0 * a)
    } else {
        2.0 * c / (disc - w)
    }
}

/// Canonical shape μ and rate factor σ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalParams {
    pub mu: f64,
    pub sigma: f64,
}

impl CanonicalParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self, GeneratorError> {
        positive("mu", mu)?;
        positive("sigma", sigma)?;
        Ok(Self { mu, sigma })
    }
}

/// σ as a known function of μ.
#[derive(Clone)]
pub enum SigmaLink {
    /// g(μ) = c / μ.
    Reciprocal { c: f64 },
    /// Arbitrary positive g.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl SigmaLink {
    pub fn eval(&self, mu: f64) -> f64 {
        match self {
            SigmaLink::Reciprocal { c } => c / mu,
            SigmaLink::Custom(g) => g(mu),
        }
    }
}

impl fmt::Debug for SigmaLink {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaLink::Reciprocal { c } => f.debug_struct("Reciprocal").field("c", c).finish(),
            SigmaLink::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Which canonical parameters are free for a registry row.
#[derive(Debug, Clone)]
pub enum Constraint {
    Free,
    MuFixed(f64),
    SigmaFixed(f64),
    Linked(SigmaLink),
}

/// A registry row resolved to its generator, without conventional
/// parameters beyond the constants inside T.
#[derive(Debug, Clone)]
pub struct Family {
    pub name: String,
    pub generator: Generator,
    pub constraint: Constraint,
}

#[derive(Debug, Clone)]
pub struct DistributionSpec {
    pub name: String,
    pub conventional_params: BTreeMap<String, f64>,
    pub generator: Generator,
    pub canonical: CanonicalParams,
    pub constraint: Constraint,
}

impl DistributionSpec {
    /// A spec with canonical parameters given directly, free of the row's
    /// constraint. Used by simulation studies that fix (μ, σ) by hand.
    pub fn from_family(family: Family, canonical: CanonicalParams) -> Self {
        Self {
            name: family.name,
            conventional_params: BTreeMap::new(),
            generator: family.generator,
            canonical,
            constraint: Constraint::Free,
        }
    }

    pub fn mu_fixed(&self) -> Option<f64> {
        match self.constraint {
            Constraint::MuFixed(m) => Some(m),
            _ => None,
        }
    }

    pub fn sigma_fixed(&self) -> Option<f64> {
        match self.constraint {
            Constraint::SigmaFixed(s) => Some(s),
            _ => None,
        }
    }

    pub fn sigma_link(&self) -> Option<&SigmaLink> {
        match &self.constraint {
            Constraint::Linked(l) => Some(l),
            _ => None,
        }
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64, GeneratorError> {
        self.generator.ln_density(x, self.canonical.mu, self.canonical.sigma)
    }
}

/// Exact registry names.
pub const DISTRIBUTION_NAMES: [&str; 24] = [
    "nakagami",
    "maxwell_boltzmann",
    "rayleigh",
    "gamma",
    "inverse_gamma",
    "delta_gamma",
    "weibull",
    "inverse_weibull",
    "generalized_gamma",
    "generalized_inverse_gamma",
    "log_generalized_gamma",
    "log_generalized_inverse_gamma",
    "exponentiated_generalized_gamma",
    "exponentiated_generalized_inverse_gamma",
    "modified_log_generalized_gamma",
    "extended_log_generalized_gamma",
    "chi_squared",
    "scaled_inverse_chi_squared",
    "gompertz",
    "modified_weibull_extension",
    "traditional_weibull",
    "flexible_weibull",
    "burr_xii",
    "dagum",
];

/// (conventional parameter names, names of those that live inside T)
fn row_params(name: &str) -> Option<(&'static [&'static str], &'static [&'static str])> {
    const GG: &[&str] = &["alpha", "beta", "delta"];
    Some(match name {
        "nakagami" => (&["m", "omega"], &[]),
        "maxwell_boltzmann" | "rayleigh" => (&["beta"], &[]),
        "gamma" | "inverse_gamma" => (&["alpha", "beta"], &[]),
        "delta_gamma" | "weibull" | "inverse_weibull" => (&["beta", "delta"], &["delta"]),
        "generalized_gamma"
        | "generalized_inverse_gamma"
        | "log_generalized_gamma"
        | "log_generalized_inverse_gamma"
        | "exponentiated_generalized_gamma"
        | "exponentiated_generalized_inverse_gamma"
        | "modified_log_generalized_gamma"
        | "extended_log_generalized_gamma" => (GG, &["delta"]),
        "chi_squared" => (&["nu"], &[]),
        "scaled_inverse_chi_squared" => (&["nu", "tau2"], &[]),
        "gompertz" => (&["alpha", "delta"], &["delta"]),
        "modified_weibull_extension" => (&["lambda", "alpha", "beta"], &["alpha", "beta"]),
        "traditional_weibull" => (&["a", "b", "c", "d"], &["b", "c", "d"]),
        "flexible_weibull" => (&["a", "b", "c"], &["b", "c"]),
        "burr_xii" | "dagum" => (&["k", "c"], &["c"]),
        _ => return None,
    })
}

fn positive(param: &str, value: f64) -> Result<f64, GeneratorError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(GeneratorError::NonPositiveParameter { param: param.to_string(), value })
    }
}

fn collect_params(
    name: &str,
    params: &[(&str, f64)],
    required: &[&str],
    allowed: &[&str],
) -> Result<BTreeMap<String, f64>, GeneratorError> {
    let mut map = BTreeMap::new();
    for &(key, value) in params {
        if !allowed.contains(&key) {
            return Err(GeneratorError::UnexpectedParameter { dist: name.to_string(), param: key.to_string() });
        }
        map.insert(key.to_string(), positive(key, value)?);
    }
    for key in required {
        if !map.contains_key(*key) {
            return Err(GeneratorError::MissingParameter { dist: name.to_string(), param: key.to_string() });
        }
    }
    Ok(map)
}

fn build_family(name: &str, p: &BTreeMap<String, f64>) -> Family {
    let get = |k: &str| p[k];
    let generator = match name {
        "nakagami" | "maxwell_boltzmann" | "rayleigh" => Generator::Power { k: 2.0 },
        "gamma" | "chi_squared" => Generator::Power { k: 1.0 },
        "inverse_gamma" | "scaled_inverse_chi_squared" => Generator::Power { k: -1.0 },
        "delta_gamma" | "weibull" | "generalized_gamma" => Generator::Power { k: get("delta") },
        "inverse_weibull" | "generalized_inverse_gamma" => Generator::Power { k: -get("delta") },
        "log_generalized_gamma" => Generator::ExpM1Power { delta: get("delta"), reciprocal: false },
        "log_generalized_inverse_gamma" => Generator::ExpM1Power { delta: get("delta"), reciprocal: true },
        "exponentiated_generalized_gamma" => Generator::Log1pPower { delta: get("delta"), reciprocal: false },
        "exponentiated_generalized_inverse_gamma" => Generator::Log1pPower { delta: get("delta"), reciprocal: true },
        "modified_log_generalized_gamma" => Generator::ExpDifference { delta: get("delta") },
        "extended_log_generalized_gamma" => Generator::ExtendedLog { delta: get("delta") },
        "gompertz" => Generator::Gompertz { delta: get("delta") },
        "modified_weibull_extension" => Generator::ModifiedWeibullExtension { alpha: get("alpha"), beta: get("beta") },
        "traditional_weibull" => Generator::TraditionalWeibull { b: get("b"), c: get("c"), d: get("d") },
        "flexible_weibull" => Generator::FlexibleWeibull { b: get("b"), c: get("c") },
        "burr_xii" => Generator::BurrXii { c: get("c") },
        "dagum" => Generator::Dagum { c: get("c") },
        _ => unreachable!("row_params admitted an unknown name"),
    };
    let constraint = match name {
        "maxwell_boltzmann" => Constraint::MuFixed(1.5),
        "rayleigh" | "weibull" | "inverse_weibull" | "gompertz" | "traditional_weibull" | "flexible_weibull"
        | "burr_xii" | "dagum" => Constraint::MuFixed(1.0),
        "modified_weibull_extension" => Constraint::SigmaFixed(1.0),
        "delta_gamma" => Constraint::Linked(SigmaLink::Reciprocal { c: 1.0 / get("delta") }),
        "chi_squared" => Constraint::Linked(SigmaLink::Reciprocal { c: 0.5 }),
        _ => Constraint::Free,
    };
    Family { name: name.to_string(), generator, constraint }
}

fn canonical_for(name: &str, p: &BTreeMap<String, f64>) -> (f64, f64) {
    let get = |k: &str| p[k];
    match name {
        "nakagami" => (get("m"), 1.0 / get("omega")),
        "maxwell_boltzmann" => (1.5, 1.0 / (3.0 * get("beta").powi(2))),
        "rayleigh" => (1.0, 1.0 / (2.0 * get("beta").powi(2))),
        "gamma" | "inverse_gamma" => (get("alpha"), 1.0 / (get("alpha") * get("beta"))),
        "delta_gamma" => (get("beta") / get("delta"), 1.0 / get("beta")),
        "weibull" | "inverse_weibull" => (1.0, 1.0 / get("beta").powf(get("delta"))),
        "chi_squared" => (get("nu") / 2.0, 1.0 / get("nu")),
        "scaled_inverse_chi_squared" => (get("nu") / 2.0, get("tau2")),
        "gompertz" => (1.0, get("alpha")),
        "modified_weibull_extension" => (get("lambda") * get("alpha"), 1.0),
        "traditional_weibull" | "flexible_weibull" => (1.0, get("a")),
        "burr_xii" | "dagum" => (1.0, get("k")),
        // the generalized-gamma block
        _ => {
            let (a, b, d) = (get("alpha"), get("beta"), get("delta"));
            (a / d, d / (a * b.powf(d)))
        }
    }
}

/// Resolve a row using only the constants inside T. Other conventional
/// parameters of the row may be present; they are validated and ignored.
pub fn family(name: &str, params: &[(&str, f64)]) -> Result<Family, GeneratorError> {
    let (conventional, shape) =
        row_params(name).ok_or_else(|| GeneratorError::UnknownDistribution(name.to_string()))?;
    let p = collect_params(name, params, shape, conventional)?;
    Ok(build_family(name, &p))
}

/// Resolve a row with its full conventional parameter set.
pub fn registry_lookup(name: &str, params: &[(&str, f64)]) -> Result<DistributionSpec, GeneratorError> {
    let (conventional, _) = row_params(name).ok_or_else(|| GeneratorError::UnknownDistribution(name.to_string()))?;
    let p = collect_params(name, params, conventional, conventional)?;
    if name == "nakagami" && p["m"] < 0.5 {
        return Err(GeneratorError::NakagamiShape(p["m"]));
    }
    let family = build_family(name, &p);
    let (mu, sigma) = canonical_for(name, &p);
    Ok(DistributionSpec {
        name: family.name,
        conventional_params: p,
        generator: family.generator,
        canonical: CanonicalParams::new(mu, sigma)?,
        constraint: family.constraint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    /// One representative parameterization per registry row.
    fn all_rows() -> Vec<DistributionSpec> {
        let rows: &[(&str, &[(&str, f64)])] = &[
            ("nakagami", &[("m", 1.5), ("omega", 2.0)]),
            ("maxwell_boltzmann", &[("beta", 1.3)]),
            ("rayleigh", &[("beta", 1.0)]),
            ("gamma", &[("alpha", 2.0), ("beta", 0.5)]),
            ("inverse_gamma", &[("alpha", 3.0), ("beta", 0.5)]),
            ("delta_gamma", &[("beta", 2.0), ("delta", 1.5)]),
            ("weibull", &[("beta", 1.2), ("delta", 2.0)]),
            ("inverse_weibull", &[("beta", 1.2), ("delta", 2.0)]),
            ("generalized_gamma", &[("alpha", 2.0), ("beta", 1.0), ("delta", 1.7)]),
            ("generalized_inverse_gamma", &[("alpha", 2.0), ("beta", 1.0), ("delta", 1.7)]),
            ("log_generalized_gamma", &[("alpha", 2.0), ("beta", 1.0), ("delta", 0.8)]),
            ("log_generalized_inverse_gamma", &[("alpha", 2.0), ("beta", 1.0), ("delta", 0.8)]),
            ("exponentiated_generalized_gamma", &[("alpha", 2.0), ("beta", 1.0), ("delta", 1.3)]),
            ("exponentiated_generalized_inverse_gamma", &[("alpha", 2.0), ("beta", 1.0), ("delta", 1.3)]),
            ("modified_log_generalized_gamma", &[("alpha", 2.0), ("beta", 1.0), ("delta", 0.5)]),
            ("extended_log_generalized_gamma", &[("alpha", 2.0), ("beta", 1.0), ("delta", 0.7)]),
            ("chi_squared", &[("nu", 4.0)]),
            ("scaled_inverse_chi_squared", &[("nu", 4.0), ("tau2", 0.7)]),
            ("gompertz", &[("alpha", 0.5), ("delta", 1.0)]),
            ("modified_weibull_extension", &[("lambda", 1.0), ("alpha", 2.0), ("beta", 1.5)]),
            ("traditional_weibull", &[("a", 1.0), ("b", 0.5), ("c", 1.0), ("d", 1.2)]),
            ("flexible_weibull", &[("a", 1.0), ("b", 1.0), ("c", 1.0)]),
            ("burr_xii", &[("k", 1.0), ("c", 2.0)]),
            ("dagum", &[("k", 1.0), ("c", 2.0)]),
        ];
        rows.iter().map(|(n, p)| registry_lookup(n, p).unwrap()).collect()
    }

    /// log-spaced test points where every row stays well inside f64 range.
    fn grid(count: usize) -> Vec<f64> {
        let (lo, hi) = (0.02f64.ln(), 8.0f64.ln());
        (0..count).map(|i| (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp()).collect()
    }

    #[test]
    fn registry_covers_every_name() {
        let rows = all_rows();
        let names: Vec<_> = rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, DISTRIBUTION_NAMES.to_vec());
    }

    #[test]
    fn lookup_examples() {
        let g = registry_lookup("gamma", &[("alpha", 2.0), ("beta", 0.5)]).unwrap();
        assert_eq!(g.generator, Generator::Power { k: 1.0 });
        assert_eq!(g.canonical, CanonicalParams { mu: 2.0, sigma: 1.0 });
        assert!(matches!(g.constraint, Constraint::Free));

        let r = registry_lookup("rayleigh", &[("beta", 1.0)]).unwrap();
        assert_eq!(r.generator, Generator::Power { k: 2.0 });
        assert_eq!(r.mu_fixed(), Some(1.0));
        assert_eq!(r.canonical.sigma, 0.5);

        let err = registry_lookup("gamma", &[("alpha", -1.0), ("beta", 1.0)]).unwrap_err();
        assert!(matches!(err, GeneratorError::NonPositiveParameter { .. }));
    }

    #[test]
    fn lookup_errors() {
        assert!(matches!(registry_lookup("lognormal", &[]), Err(GeneratorError::UnknownDistribution(_))));
        assert!(matches!(
            registry_lookup("gamma", &[("alpha", 1.0)]),
            Err(GeneratorError::MissingParameter { .. })
        ));
        assert!(matches!(
            registry_lookup("gamma", &[("alpha", 1.0), ("beta", 1.0), ("nu", 2.0)]),
            Err(GeneratorError::UnexpectedParameter { .. })
        ));
        assert!(matches!(
            registry_lookup("nakagami", &[("m", 0.4), ("omega", 1.0)]),
            Err(GeneratorError::NakagamiShape(_))
        ));
        assert!(registry_lookup("nakagami", &[("m", 0.5), ("omega", 1.0)]).is_ok());
    }

    #[test]
    fn constraint_classification() {
        for spec in all_rows() {
            let expect = match spec.name.as_str() {
                "maxwell_boltzmann" | "rayleigh" | "weibull" | "inverse_weibull" | "gompertz"
                | "traditional_weibull" | "flexible_weibull" | "burr_xii" | "dagum" => "mu",
                "modified_weibull_extension" => "sigma",
                "delta_gamma" | "chi_squared" => "link",
                _ => "free",
            };
            let got = match spec.constraint {
                Constraint::Free => "free",
                Constraint::MuFixed(m) => {
                    assert_eq!(m, spec.canonical.mu);
                    "mu"
                }
                Constraint::SigmaFixed(s) => {
                    assert_eq!(s, spec.canonical.sigma);
                    "sigma"
                }
                Constraint::Linked(ref l) => {
                    assert!(rel(l.eval(spec.canonical.mu), spec.canonical.sigma) < 1e-15);
                    "link"
                }
            };
            assert_eq!(got, expect, "{}", spec.name);
        }
    }

    #[test]
    fn family_needs_only_shape_constants() {
        let f = family("weibull", &[("delta", 2.0)]).unwrap();
        assert_eq!(f.generator, Generator::Power { k: 2.0 });
        let f = family("gamma", &[]).unwrap();
        assert_eq!(f.generator.power_exponent(), Some(1.0));
        assert!(family("weibull", &[]).is_err());
        assert!(family("weibull", &[("delta", 2.0), ("beta", 3.0)]).is_ok());
    }

    #[test]
    fn eval_examples() {
        let nak = Generator::Power { k: 2.0 };
        assert_eq!(nak.t(3.0).unwrap(), 9.0);
        assert_eq!(nak.t_prime(3.0).unwrap(), 6.0);
        assert_eq!(nak.t_second(3.0).unwrap(), 2.0);
        assert_eq!(nak.t_second(0.7).unwrap(), 2.0);
        assert_eq!(Generator::Power { k: 1.0 }.t_second(4.2).unwrap(), 0.0);

        let gomp = Generator::Gompertz { delta: 1.0 };
        let tiny = 1e-12;
        assert!(rel(gomp.t(tiny).unwrap(), tiny) < 1e-11);
        let gomp2 = Generator::Gompertz { delta: 2.0 };
        let e2 = 1f64.exp().powi(2);
        assert!(rel(gomp2.t_second(1.0).unwrap(), 4.0 * e2) < 1e-15);
        assert!((gomp2.t_second(1.0).unwrap() - 29.5562).abs() < 1e-4);

        let burr = Generator::BurrXii { c: 2.0 };
        assert!((burr.t(1.0).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(rel(burr.t(1.0).unwrap(), std::f64::consts::LN_2) < 1e-15);

        let flex = Generator::FlexibleWeibull { b: 1.0, c: 1.0 };
        assert!(rel(flex.t_prime(1.0).unwrap(), 2.0) < 1e-15);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(Generator::Power { k: 2.0 }.t_inverse(4.0).unwrap(), 2.0);
        assert_eq!(Generator::Power { k: 1.0 }.t_inverse(7.5).unwrap(), 7.5);
        let burr = Generator::BurrXii { c: 2.0 };
        assert!(rel(burr.t_inverse(std::f64::consts::LN_2).unwrap(), 1.0) < 1e-15);
    }

    #[test]
    fn domain_and_range_errors() {
        let g = Generator::Power { k: 2.0 };
        assert_eq!(g.t(0.0), Err(GeneratorError::Domain(0.0)));
        assert_eq!(g.t(-1.0), Err(GeneratorError::Domain(-1.0)));
        assert!(matches!(g.t_inverse(0.0), Err(GeneratorError::OutOfRange(_))));
        assert!(matches!(g.t_inverse(f64::NAN), Err(GeneratorError::OutOfRange(_))));
        let gomp = Generator::Gompertz { delta: 1.0 };
        assert_eq!(gomp.t(800.0), Err(GeneratorError::NumericRange(800.0)));
        let lg = Generator::ExpM1Power { delta: 0.5, reciprocal: false };
        // log-space keeps this finite even though exp(800) overflows
        assert!(lg.t(800.0).unwrap().is_finite());
    }

    #[test]
    fn round_trip_every_row() {
        for spec in all_rows() {
            let g = &spec.generator;
            for x in grid(100) {
                let u = g.t(x).unwrap();
                let back = g.t_inverse(u).unwrap();
                assert!(rel(back, x) < 1e-10, "{}: x={x} back={back}", spec.name);
                assert!(rel(g.t(back).unwrap(), u) <= 1e-12, "{}: residual at u={u}", spec.name);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for spec in all_rows() {
            let g = &spec.generator;
            for x in grid(25) {
                let h = 1e-5 * x;
                let v = g.evaluate(x).unwrap();
                let fd1 = (g.t(x + h).unwrap() - g.t(x - h).unwrap()) / (2.0 * h);
                let fd2 = (g.t_prime(x + h).unwrap() - g.t_prime(x - h).unwrap()) / (2.0 * h);
                assert!(rel(fd1, v.dt) < 1e-6, "{} T' at {x}: fd={fd1} got={}", spec.name, v.dt);
                let scale = v.d2t.abs().max(1e-3 * v.dt.abs() / x);
                assert!((fd2 - v.d2t).abs() / scale < 1e-5, "{} T'' at {x}: fd={fd2} got={}", spec.name, v.d2t);
            }
        }
    }

    #[test]
    fn monotone_in_declared_direction() {
        for spec in all_rows() {
            let g = &spec.generator;
            let pts = grid(200);
            for w in pts.windows(2) {
                let (a, b) = (g.t(w[0]).unwrap(), g.t(w[1]).unwrap());
                assert!(a > 0.0 && b > 0.0);
                if g.is_increasing() {
                    assert!(b > a, "{} not increasing at {}", spec.name, w[0]);
                } else {
                    assert!(b < a, "{} not decreasing at {}", spec.name, w[0]);
                }
                assert_eq!(g.t_prime(w[0]).unwrap() > 0.0, g.is_increasing());
            }
        }
    }

    #[test]
    fn densities_match_textbook_forms() {
        use crate::special::ln_gamma;
        let lg = |x: f64| ln_gamma(x).unwrap();
        let points: Vec<f64> = (1..=20).map(|i| 0.15 * i as f64).collect();

        let (a, b) = (2.5, 0.8);
        let spec = registry_lookup("gamma", &[("alpha", a), ("beta", b)]).unwrap();
        for &x in &points {
            let textbook = (a - 1.0) * x.ln() - x / b - lg(a) - a * b.ln();
            assert!(rel(spec.ln_pdf(x).unwrap().exp(), textbook.exp()) < 1e-10);
        }

        let (m, om) = (1.7, 2.2);
        let spec = registry_lookup("nakagami", &[("m", m), ("omega", om)]).unwrap();
        for &x in &points {
            let textbook =
                2f64.ln() + m * m.ln() - lg(m) - m * om.ln() + (2.0 * m - 1.0) * x.ln() - m * x * x / om;
            assert!(rel(spec.ln_pdf(x).unwrap().exp(), textbook.exp()) < 1e-10);
        }

        let (beta, k) = (1.4, 2.3);
        let spec = registry_lookup("weibull", &[("beta", beta), ("delta", k)]).unwrap();
        for &x in &points {
            let textbook = (k / beta).ln() + (k - 1.0) * (x / beta).ln() - (x / beta).powf(k);
            assert!(rel(spec.ln_pdf(x).unwrap().exp(), textbook.exp()) < 1e-10);
        }

        let nu = 5.0;
        let spec = registry_lookup("chi_squared", &[("nu", nu)]).unwrap();
        for &x in &points {
            let textbook = (nu / 2.0 - 1.0) * x.ln() - x / 2.0 - (nu / 2.0) * 2f64.ln() - lg(nu / 2.0);
            assert!(rel(spec.ln_pdf(x).unwrap().exp(), textbook.exp()) < 1e-10);
        }

        let beta = 0.9;
        let spec = registry_lookup("rayleigh", &[("beta", beta)]).unwrap();
        for &x in &points {
            let textbook = x.ln() - 2.0 * beta.ln() - x * x / (2.0 * beta * beta);
            assert!(rel(spec.ln_pdf(x).unwrap().exp(), textbook.exp()) < 1e-10);
        }
    }

    #[test]
    fn decreasing_rows_use_absolute_derivative() {
        // inverse gamma: x^{-α-1} e^{-1/(βx)} / (Γ(α) β^α)
        let (a, b) = (3.0, 0.5);
        let spec = registry_lookup("inverse_gamma", &[("alpha", a), ("beta", b)]).unwrap();
        for x in [0.1, 0.5, 1.0, 2.0] {
            let textbook = -(a + 1.0) * f64::ln(x) - 1.0 / (b * x) - special::ln_gamma(a).unwrap() - a * f64::ln(b);
            assert!(rel(spec.ln_pdf(x).unwrap(), textbook) < 1e-12);
        }
    }
}
