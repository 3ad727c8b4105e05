//! Monte Carlo study of the estimators: distribution × method × n grids,
//! N replications per cell, relative bias and MSE with Monte Carlo
//! standard errors.
//!
//! "Relative bias" here is the mean absolute relative deviation
//! (1/N) Σ |θ̂ − θ| / |θ|, the name kept for the output headers.
//!
//! Seeds: each cell draws from `cell_seed(seed, distribution index, method
//! index, n)`, a splitmix64 chain; replication i (1-based) uses stream i of
//! that seed. The method index is the method's fixed position
//! (closed_form 0, map_numeric 1, ml_numeric 2), not its position in the
//! config, so any single cell can be re-drawn from the manifest alone.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{fit_map_numeric, fit_ml_numeric};
use crate::estimators::{estimate_free, estimate_power};
use crate::generators::{family, CanonicalParams, Constraint, DistributionSpec, GeneratorError};
use crate::sampling::{sample_family, RngStream};
use crate::statistics::{CompensatedSum, HyperParams};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("config line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("config JSON: {0}")]
    Json(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("distribution {name}: {source}")]
    Distribution { name: String, source: GeneratorError },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("no estimates to summarize")]
    Empty,
    #[error("true value must be nonzero")]
    ZeroTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    ClosedForm,
    MapNumeric,
    MlNumeric,
}

impl SimMethod {
    pub const ALL: [SimMethod; 3] = [SimMethod::ClosedForm, SimMethod::MapNumeric, SimMethod::MlNumeric];

    pub fn as_str(&self) -> &'static str {
        match self {
            SimMethod::ClosedForm => "closed_form",
            SimMethod::MapNumeric => "map_numeric",
            SimMethod::MlNumeric => "ml_numeric",
        }
    }

    pub fn index(&self) -> u64 {
        *self as u64
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

impl fmt::Display for SimMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Mu,
    Sigma,
}

impl Parameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            Parameter::Mu => "mu",
            Parameter::Sigma => "sigma",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mu" => Some(Parameter::Mu),
            "sigma" => Some(Parameter::Sigma),
            _ => None,
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One simulated distribution: a registry name, the constants inside its
/// generator, and optionally the power exponent s when T(x) = x^(−s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionEntry {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
}

impl DistributionEntry {
    /// Name plus constants, e.g. `weibull[delta=2]`.
    pub fn label(&self) -> String {
        if self.params.is_empty() {
            return self.name.clone();
        }
        let inner: Vec<String> = self.params.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}[{}]", self.name, inner.join(";"))
    }

    pub fn spec(&self, mu: f64, sigma: f64) -> Result<DistributionSpec, ConfigError> {
        let err = |source| ConfigError::Distribution { name: self.name.clone(), source };
        let params: Vec<(&str, f64)> = self.params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let fam = family(&self.name, &params).map_err(err)?;
        if let Some(s) = self.s {
            match fam.generator.power_exponent() {
                Some(k) if k == -s => {}
                _ => {
                    return Err(ConfigError::Invalid(format!(
                        "{}: s = {s} does not match the generator T(x) = x^(-s)",
                        self.label()
                    )))
                }
            }
        }
        Ok(DistributionSpec::from_family(fam, CanonicalParams::new(mu, sigma).map_err(err)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub distributions: Vec<DistributionEntry>,
    pub true_mu: f64,
    pub true_sigma: f64,
    pub n_grid: Vec<usize>,
    pub replications: usize,
    pub hp: HyperParams,
    pub methods: Vec<SimMethod>,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.distributions.is_empty() {
            return invalid("distributions list is empty");
        }
        if self.n_grid.is_empty() || self.n_grid[0] == 0 {
            return invalid("n_grid must be nonempty with positive sizes");
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("n_grid must be strictly increasing");
        }
        if self.replications == 0 {
            return invalid("replications must be at least 1");
        }
        if self.methods.is_empty() {
            return invalid("methods list is empty");
        }
        for (i, m) in self.methods.iter().enumerate() {
            if self.methods[..i].contains(m) {
                return Err(ConfigError::Invalid(format!("method {m} listed twice")));
            }
        }
        HyperParams::new(self.hp.alpha1, self.hp.beta1, self.hp.alpha2, self.hp.beta2)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for d in &self.distributions {
            d.spec(self.true_mu, self.true_sigma)?;
        }
        Ok(())
    }

    /// Parses either JSON (text starting with `{`) or flat `key = value`
    /// lines. Does not validate.
    ///
    /// ```text
    /// distributions = gamma; weibull delta=2 s=-2
    /// true_mu = 2
    /// true_sigma = 1
    /// n_grid = 15, 30, 60
    /// replications = 1000
    /// hp = 0.01
    /// methods = closed_form, map_numeric
    /// seed = 42
    /// ```
    ///
    /// `hp` sets all four hyperparameters; `alpha1` … `beta2` override one.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            return serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()));
        }
        let mut distributions = None;
        let (mut true_mu, mut true_sigma, mut replications, mut seed) = (None, None, None, None);
        let mut n_grid = None;
        let mut methods = None;
        let mut hp = HyperParams::default();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| ConfigError::Parse { line: line_no, message };
            let (key, value) = line.split_once('=').ok_or_else(|| perr(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let real = |v: &str| v.parse::<f64>().map_err(|_| perr(format!("{key}: not a number: {v:?}")));
            match key {
                "distributions" => distributions = Some(parse_distributions(value).map_err(perr)?),
                "true_mu" => true_mu = Some(real(value)?),
                "true_sigma" => true_sigma = Some(real(value)?),
                "n_grid" => {
                    n_grid = Some(
                        parse_list(value)
                            .map(|v| v.parse::<usize>().map_err(|_| perr(format!("n_grid: bad size {v:?}"))))
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "replications" => {
                    replications = Some(value.parse::<usize>().map_err(|_| perr(format!("replications: {value:?}")))?)
                }
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| perr(format!("seed: {value:?}")))?),
                "methods" => {
                    methods = Some(
                        parse_list(value)
                            .map(|v| SimMethod::parse(v).ok_or_else(|| perr(format!("unknown method {v:?}"))))
                            .collect::<Result<Vec<_>, _>>()?,
                    )
                }
                "hp" => {
                    let v = real(value)?;
                    hp = HyperParams { alpha1: v, beta1: v, alpha2: v, beta2: v };
                }
                "alpha1" => hp.alpha1 = real(value)?,
                "beta1" => hp.beta1 = real(value)?,
                "alpha2" => hp.alpha2 = real(value)?,
                "beta2" => hp.beta2 = real(value)?,
                other => return Err(perr(format!("unknown key {other:?}"))),
            }
        }
        let missing = |k: &str| ConfigError::Invalid(format!("missing key {k}"));
        Ok(SimConfig {
            distributions: distributions.ok_or_else(|| missing("distributions"))?,
            true_mu: true_mu.ok_or_else(|| missing("true_mu"))?,
            true_sigma: true_sigma.ok_or_else(|| missing("true_sigma"))?,
            n_grid: n_grid.ok_or_else(|| missing("n_grid"))?,
            replications: replications.ok_or_else(|| missing("replications"))?,
            hp,
            methods: methods.unwrap_or_else(|| vec![SimMethod::ClosedForm]),
            seed: seed.unwrap_or(0),
        })
    }
}

fn parse_list(v: &str) -> impl Iterator<Item = &str> {
    v.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_distributions(value: &str) -> Result<Vec<DistributionEntry>, String> {
    value
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|entry| {
            let mut tokens = entry.split_whitespace();
            let name = tokens.next().ok_or("empty distribution entry")?.to_string();
            let mut params = BTreeMap::new();
            let mut s = None;
            for tok in tokens {
                let (k, v) = tok.split_once('=').ok_or_else(|| format!("{name}: expected k=v, got {tok:?}"))?;
                let v: f64 = v.parse().map_err(|_| format!("{name}: {k} is not a number"))?;
                if k == "s" {
                    s = Some(v);
                } else {
                    params.insert(k.to_string(), v);
                }
            }
            Ok(DistributionEntry { name, params, s })
        })
        .collect()
}

/// Mean and Monte Carlo standard error (sd/√N; 0 when N = 1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanWithSe {
    pub mean: f64,
    pub se: f64,
}

pub fn mean_with_se(values: &[f64]) -> Result<MeanWithSe, MetricError> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<CompensatedSum>().total() / n;
    if values.len() == 1 {
        return Ok(MeanWithSe { mean, se: 0.0 });
    }
    let ss = values.iter().map(|v| (v - mean).powi(2)).collect::<CompensatedSum>().total();
    Ok(MeanWithSe { mean, se: (ss / (n - 1.0)).sqrt() / n.sqrt() })
}

fn deviations(estimates: &[f64], truth: f64, f: impl Fn(f64) -> f64) -> Result<Vec<f64>, MetricError> {
    if truth == 0.0 {
        return Err(MetricError::ZeroTruth);
    }
    Ok(estimates.iter().map(|&e| f(e)).collect())
}

/// (1/N) Σ |θ̂ − θ| / |θ| with its standard error.
pub fn relative_bias_with_se(estimates: &[f64], truth: f64) -> Result<MeanWithSe, MetricError> {
    mean_with_se(&deviations(estimates, truth, |e| ((e - truth) / truth).abs())?)
}

/// (1/N) Σ (θ̂ − θ)² with its standard error.
pub fn mse_with_se(estimates: &[f64], truth: f64) -> Result<MeanWithSe, MetricError> {
    mean_with_se(&deviations(estimates, truth, |e| (e - truth).powi(2))?)
}

pub fn relative_bias(estimates: &[f64], truth: f64) -> Result<f64, MetricError> {
    relative_bias_with_se(estimates, truth).map(|m| m.mean)
}

pub fn mse(estimates: &[f64], truth: f64) -> Result<f64, MetricError> {
    mse_with_se(estimates, truth).map(|m| m.mean)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub distribution: String,
    pub method: SimMethod,
    pub parameter: Parameter,
    pub n: usize,
    pub rel_bias: f64,
    pub mc_se_bias: f64,
    pub mse: f64,
    pub mc_se_mse: f64,
    pub failures: usize,
    pub seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the (distribution, method, n) cell.
pub fn cell_seed(seed: u64, distribution_index: u64, method: SimMethod, n: usize) -> u64 {
    [distribution_index, method.index(), n as u64]
        .into_iter()
        .fold(splitmix64(seed), |h, v| splitmix64(h ^ splitmix64(v)))
}

/// One cell's inputs.
#[derive(Debug, Clone)]
pub struct Cell<'a> {
    pub label: String,
    pub spec: DistributionSpec,
    pub power_s: Option<f64>,
    pub method: SimMethod,
    pub n: usize,
    pub replications: usize,
    pub hp: &'a HyperParams,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CellError {
    #[error("all {replications} replications failed (first: {first})")]
    AllFailed { replications: usize, first: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Estimates for one replication, or why it failed.
pub fn replicate(cell: &Cell<'_>, stream_id: u64) -> Result<(f64, f64), String> {
    let mut rng = RngStream::new(cell.seed, stream_id);
    let sample = sample_family(&mut rng, &cell.spec, cell.n).map_err(|e| e.to_string())?;
    let g = &cell.spec.generator;
    let (mu, sigma) = match cell.method {
        SimMethod::ClosedForm => {
            let e = match cell.power_s {
                Some(s) => estimate_power(&sample, s, cell.hp.sigma_prior()),
                None => estimate_free(g, &sample, cell.hp.sigma_prior()),
            }
            .map_err(|e| e.to_string())?;
            (e.mu, e.sigma)
        }
        SimMethod::MapNumeric | SimMethod::MlNumeric => {
            let fit = if cell.method == SimMethod::MapNumeric {
                fit_map_numeric(g, &Constraint::Free, &sample, cell.hp, None)
            } else {
                fit_ml_numeric(g, &Constraint::Free, &sample, None)
            }
            .map_err(|e| e.to_string())?;
            if !fit.report.converged {
                return Err(format!("optimizer stopped at gradient norm {:e}", fit.report.final_gradient_norm));
            }
            (fit.estimate.mu, fit.estimate.sigma)
        }
    };
    match (mu, sigma) {
        (Some(m), Some(s)) if m.is_finite() && s.is_finite() => Ok((m, s)),
        _ => Err("non-finite estimate".to_string()),
    }
}

/// Runs all replications of a cell (in parallel, reduced in replication
/// order) and returns the μ and σ rows.
pub fn run_cell(cell: &Cell<'_>) -> Result<[MetricRow; 2], CellError> {
    let outcomes: Vec<Result<(f64, f64), String>> =
        (1..=cell.replications as u64).into_par_iter().map(|i| replicate(cell, i)).collect();
    let mut mus = Vec::with_capacity(outcomes.len());
    let mut sigmas = Vec::with_capacity(outcomes.len());
    let mut first = None;
    for o in outcomes {
        match o {
            Ok((m, s)) => {
                mus.push(m);
                sigmas.push(s);
            }
            Err(e) => {
                first.get_or_insert(e);
            }
        }
    }
    if mus.is_empty() {
        return Err(CellError::AllFailed { replications: cell.replications, first: first.unwrap_or_default() });
    }
    let failures = cell.replications - mus.len();
    let row = |parameter, estimates: &[f64], truth: f64| -> Result<MetricRow, CellError> {
        let rb = relative_bias_with_se(estimates, truth)?;
        let m = mse_with_se(estimates, truth)?;
        Ok(MetricRow {
            distribution: cell.label.clone(),
            method: cell.method,
            parameter,
            n: cell.n,
            rel_bias: rb.mean,
            mc_se_bias: rb.se,
            mse: m.mean,
            mc_se_mse: m.se,
            failures,
            seed: cell.seed,
        })
    };
    let canon = cell.spec.canonical;
    Ok([row(Parameter::Mu, &mus, canon.mu)?, row(Parameter::Sigma, &sigmas, canon.sigma)?])
}

/// A cell that produced no rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailure {
    pub distribution: String,
    pub method: SimMethod,
    pub n: usize,
    pub seed: u64,
    pub error: String,
}

/// Per-cell failure counts for the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellFailureCount {
    pub distribution: String,
    pub method: SimMethod,
    pub n: usize,
    pub seed: u64,
    pub failures: usize,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub rows: Vec<MetricRow>,
    pub failure_counts: Vec<CellFailureCount>,
    pub errors: Vec<CellFailure>,
}

/// Runs every cell of the grid on the current rayon pool.
pub fn run_grid(config: &SimConfig) -> Result<GridResult, ConfigError> {
    config.validate()?;
    let mut cells = Vec::new();
    for (d, entry) in config.distributions.iter().enumerate() {
        let spec = entry.spec(config.true_mu, config.true_sigma)?;
        for &method in &config.methods {
            for &n in &config.n_grid {
                cells.push(Cell {
                    label: entry.label(),
                    spec: spec.clone(),
                    power_s: entry.s,
                    method,
                    n,
                    replications: config.replications,
                    hp: &config.hp,
                    seed: cell_seed(config.seed, d as u64, method, n),
                });
            }
        }
    }
    let results: Vec<Result<[MetricRow; 2], CellError>> = cells.par_iter().map(run_cell).collect();

    let mut rows = Vec::new();
    let mut failure_counts = Vec::new();
    let mut errors = Vec::new();
    for (cell, result) in cells.iter().zip(results) {
        let failures = match result {
            Ok(pair) => {
                let f = pair[0].failures;
                rows.extend(pair);
                f
            }
            Err(e) => {
                errors.push(CellFailure {
                    distribution: cell.label.clone(),
                    method: cell.method,
                    n: cell.n,
                    seed: cell.seed,
                    error: e.to_string(),
                });
                cell.replications
            }
        };
        failure_counts.push(CellFailureCount {
            distribution: cell.label.clone(),
            method: cell.method,
            n: cell.n,
            seed: cell.seed,
            failures,
            replications: cell.replications,
        });
    }
    rows.sort_by(|a, b| {
        (&a.distribution, a.method, a.parameter, a.n).cmp(&(&b.distribution, b.method, b.parameter, b.n))
    });
    Ok(GridResult { rows, failure_counts, errors })
}

/// [`run_grid`] on a dedicated pool of `threads` workers.
pub fn run_grid_with_threads(config: &SimConfig, threads: usize) -> Result<GridResult, ConfigError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| ConfigError::Invalid(format!("thread pool: {e}")))?;
    pool.install(|| run_grid(config))
}

/// Which metric of a row a trend check reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    RelBias,
    Mse,
}

impl Metric {
    pub fn of(&self, row: &MetricRow) -> (f64, f64) {
        match self {
            Metric::RelBias => (row.rel_bias, row.mc_se_bias),
            Metric::Mse => (row.mse, row.mc_se_mse),
        }
    }
}

/// Pairs of consecutive rows (sorted by n) where the metric rises by more
/// than `k` combined standard errors.
pub fn trend_violations<'a>(rows: &[&'a MetricRow], metric: Metric, k: f64) -> Vec<(&'a MetricRow, &'a MetricRow)> {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.n);
    sorted
        .windows(2)
        .filter(|w| {
            let (a, sa) = metric.of(w[0]);
            let (b, sb) = metric.of(w[1]);
            b - a > k * (sa * sa + sb * sb).sqrt()
        })
        .map(|w| (w[0], w[1]))
        .collect()
}

/// Least-squares slope of log(metric) against log(n).
pub fn log_log_slope(rows: &[&MetricRow], metric: Metric) -> f64 {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| ((r.n as f64).ln(), metric.of(r).0.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma_config() -> SimConfig {
        SimConfig {
            distributions: vec![DistributionEntry { name: "gamma".into(), params: BTreeMap::new(), s: Some(-1.0) }],
            true_mu: 2.0,
            true_sigma: 1.0,
            n_grid: vec![15, 30],
            replications: 50,
            hp: HyperParams::uniform(0.01).unwrap(),
            methods: vec![SimMethod::ClosedForm],
            seed: 7,
        }
    }

    #[test]
    fn metric_examples() {
        assert_eq!(relative_bias(&[2.0, 2.0, 2.0], 2.0).unwrap(), 0.0);
        assert_eq!(relative_bias(&[1.0, 3.0], 2.0).unwrap(), 0.5);
        assert_eq!(mse(&[2.0, 2.0], 2.0).unwrap(), 0.0);
        assert_eq!(mse(&[1.0, 3.0], 2.0).unwrap(), 1.0);
        assert_eq!(relative_bias(&[], 2.0), Err(MetricError::Empty));
        assert_eq!(mse(&[1.0], 0.0), Err(MetricError::ZeroTruth));
        assert_eq!(mean_with_se(&[3.0]).unwrap().se, 0.0);
    }

    #[test]
    fn standard_error_of_known_values() {
        // sd of [1, 2, 3, 4] is sqrt(5/3)
        let m = mean_with_se(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.mean, 2.5);
        assert!((m.se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
    }

    #[test]
    fn grid_shape_and_order() {
        let out = run_grid(&gamma_config()).unwrap();
        assert_eq!(out.rows.len(), 4);
        let keys: Vec<(Parameter, usize)> = out.rows.iter().map(|r| (r.parameter, r.n)).collect();
        assert_eq!(keys, vec![(Parameter::Mu, 15), (Parameter::Mu, 30), (Parameter::Sigma, 15), (Parameter::Sigma, 30)]);
        for r in &out.rows {
            assert_eq!(r.failures, 0);
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut cfg = gamma_config();
        cfg.methods = vec![SimMethod::ClosedForm, SimMethod::MlNumeric];
        cfg.replications = 20;
        let a = run_grid_with_threads(&cfg, 1).unwrap();
        let b = run_grid_with_threads(&cfg, 8).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_replication_is_reproducible() {
        let mut cfg = gamma_config();
        cfg.replications = 1;
        cfg.n_grid = vec![15];
        let a = run_grid_with_threads(&cfg, 1).unwrap();
        let b = run_grid_with_threads(&cfg, 8).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.rows[0].mc_se_bias, 0.0);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = gamma_config();
        cfg.distributions.clear();
        assert!(matches!(run_grid(&cfg), Err(ConfigError::Invalid(_))));
        let mut cfg = gamma_config();
        cfg.n_grid = vec![30, 15];
        assert!(cfg.validate().is_err());
        let mut cfg = gamma_config();
        cfg.replications = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = gamma_config();
        cfg.distributions[0].s = Some(1.0);
        assert!(cfg.validate().is_err());
        let mut cfg = gamma_config();
        cfg.distributions[0].name = "cauchy".into();
        assert!(matches!(cfg.validate(), Err(ConfigError::Distribution { .. })));
    }

    #[test]
    fn key_value_and_json_agree() {
        let text = "# study\n\
            distributions = gamma s=-1; weibull delta=2\n\
            true_mu = 2\ntrue_sigma = 1\n\
            n_grid = 15, 30\nreplications = 10\nhp = 0.01\nbeta2 = 0.5\n\
            methods = closed_form, ml_numeric\nseed = 3\n";
        let cfg = SimConfig::parse(text).unwrap();
        assert_eq!(cfg.distributions[1].label(), "weibull[delta=2]");
        assert_eq!(cfg.hp.beta2, 0.5);
        assert_eq!(cfg.hp.alpha1, 0.01);
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(SimConfig::parse(&json).unwrap(), cfg);
        assert!(matches!(SimConfig::parse("n_grid = 1,x"), Err(ConfigError::Parse { line: 1, .. })));
        assert!(matches!(SimConfig::parse("bogus = 1"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn cell_seeds_differ_per_coordinate() {
        let base = cell_seed(1, 0, SimMethod::ClosedForm, 15);
        assert_ne!(base, cell_seed(2, 0, SimMethod::ClosedForm, 15));
        assert_ne!(base, cell_seed(1, 1, SimMethod::ClosedForm, 15));
        assert_ne!(base, cell_seed(1, 0, SimMethod::MapNumeric, 15));
        assert_ne!(base, cell_seed(1, 0, SimMethod::ClosedForm, 30));
        assert_eq!(base, cell_seed(1, 0, SimMethod::ClosedForm, 15));
    }

    #[test]
    fn trend_and_slope_helpers() {
        let row = |n, mse: f64| MetricRow {
            distribution: "gamma".into(),
            method: SimMethod::ClosedForm,
            parameter: Parameter::Mu,
            n,
            rel_bias: 0.0,
            mc_se_bias: 0.0,
            mse,
            mc_se_mse: 0.01,
            failures: 0,
            seed: 0,
        };
        let rows = [row(10, 1.0), row(100, 0.1), row(1000, 0.01)];
        let refs: Vec<&MetricRow> = rows.iter().collect();
        assert!((log_log_slope(&refs, Metric::Mse) + 1.0).abs() < 1e-12);
        assert!(trend_violations(&refs, Metric::Mse, 2.0).is_empty());
        let bumpy = [row(10, 0.1), row(100, 0.2)];
        let refs: Vec<&MetricRow> = bumpy.iter().collect();
        assert_eq!(trend_violations(&refs, Metric::Mse, 2.0).len(), 1);
    }
}
