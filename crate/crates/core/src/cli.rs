//! Command-line front end: `fit`, `simulate` and `plot`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config error, 3 data error,
//! 4 estimation failure, 5 simulation finished with failed cells.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baselines::{fit_map_numeric, fit_ml_numeric, NumericFit};
use crate::estimators::{estimate_constrained, Estimate};
use crate::generators::{family, Constraint, Family};
use crate::montecarlo::{run_grid_with_threads, GridResult, MetricRow, SimConfig};
use crate::statistics::HyperParams;

pub const RESULTS_HEADER: [&str; 10] =
    ["distribution", "method", "parameter", "n", "rel_bias", "mc_se_bias", "mse", "mc_se_mse", "failures", "seed"];

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Io(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("estimation failed: {0}")]
    Estimation(String),
    #[error("{0} cell(s) failed; see manifest.json")]
    PartialFailure(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
            CliError::PartialFailure(_) => 5,
        }
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "expfam", version, about = "Closed-form MAP estimation for generator-defined families")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate (μ, σ) from a data file.
    Fit(FitArgs),
    /// Run a Monte Carlo grid and write results.csv and manifest.json.
    Simulate(SimulateArgs),
    /// Render SVG plots and .dat tables from results.csv.
    Plot(PlotArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitMethod {
    Closed,
    Map,
    Ml,
    All,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Registry name, e.g. gamma, weibull, nakagami.
    #[arg(long)]
    pub dist: String,
    /// Generator constants as k=v (repeatable or comma separated).
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    /// One positive value per line; `#` starts a comment.
    #[arg(long, conflicts_with = "stdin", required_unless_present = "stdin")]
    pub data: Option<PathBuf>,
    /// Read the data from standard input.
    #[arg(long)]
    pub stdin: bool,
    #[arg(long, value_enum, default_value = "closed")]
    pub method: FitMethod,
    /// Hyperparameters as k=v with keys alpha1, beta1, alpha2, beta2 (all default to 0.01).
    #[arg(long, value_delimiter = ',')]
    pub hp: Vec<String>,
    /// Estimate both μ and σ even when the row fixes or links one of them.
    #[arg(long)]
    pub free: bool,
    /// Emit a single JSON object instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// key=value or JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the n grid, e.g. 15,30,60.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Option<Vec<usize>>,
    /// Override the number of replications.
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Plot(a) => cmd_plot(&a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("expfam: {e}");
            e.exit_code()
        }
    }
}

fn parse_pairs(items: &[String]) -> Result<Vec<(String, f64)>, CliError> {
    items
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (k, v) = item.split_once('=').ok_or_else(|| CliError::Config(format!("expected k=v, got {item:?}")))?;
            let v = v.trim().parse::<f64>().map_err(|_| CliError::Config(format!("{k}: not a number: {v:?}")))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn parse_hp(items: &[String]) -> Result<HyperParams, CliError> {
    let mut hp = HyperParams::default();
    for (k, v) in parse_pairs(items)? {
        match k.as_str() {
            "alpha1" => hp.alpha1 = v,
            "beta1" => hp.beta1 = v,
            "alpha2" => hp.alpha2 = v,
            "beta2" => hp.beta2 = v,
            other => return Err(CliError::Config(format!("unknown hyperparameter {other:?}"))),
        }
    }
    HyperParams::new(hp.alpha1, hp.beta1, hp.alpha2, hp.beta2).map_err(|e| CliError::Config(e.to_string()))
}

/// One value per line, blank lines and `#` comments skipped.
pub fn parse_data(text: &str) -> Result<Vec<f64>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| CliError::Data(format!("line {}: not a number: {line:?}", i + 1)))?;
        if !v.is_finite() {
            return Err(CliError::Data(format!("line {}: value {v} is not finite", i + 1)));
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(CliError::Data("no observations".into()));
    }
    Ok(out)
}

fn constraint_name(c: &Constraint) -> String {
    match c {
        Constraint::Free => "free".into(),
        Constraint::MuFixed(m) => format!("mu fixed at {m}"),
        Constraint::SigmaFixed(s) => format!("sigma fixed at {s}"),
        Constraint::Linked(l) => format!("sigma linked to mu ({l:?})"),
    }
}

fn estimate_json(e: &Estimate) -> Value {
    let d = &e.diagnostics;
    json!({
        "method": e.method.as_str(),
        "mu": e.mu,
        "sigma": e.sigma,
        "diagnostics": {
            "discriminant": d.discriminant,
            "residual_sigma_eq": d.residual_sigma_eq,
            "residual_mu_eq": d.residual_mu_eq,
            "mu_score": d.mu_score,
        }
    })
}

fn numeric_json(f: &NumericFit) -> Value {
    let mut v = estimate_json(&f.estimate);
    v["optimizer"] = json!({
        "converged": f.report.converged,
        "iterations": f.report.iterations,
        "final_gradient_norm": f.report.final_gradient_norm,
        "objective": f.report.objective,
    });
    v
}

fn estimate_text(label: &str, e: &Estimate) -> String {
    let fmt_opt = |v: Option<f64>| v.map_or("(fixed)".to_string(), |x| format!("{x:.10}"));
    let d = &e.diagnostics;
    let mut s = format!("{label} [{}]\n  mu    = {}\n  sigma = {}\n", e.method, fmt_opt(e.mu), fmt_opt(e.sigma));
    if let Some(disc) = d.discriminant {
        let _ = writeln!(s, "  discriminant      = {disc:e}");
    }
    let _ = writeln!(s, "  residual_sigma_eq = {:e}", d.residual_sigma_eq);
    let _ = writeln!(s, "  residual_mu_eq    = {:e}", d.residual_mu_eq);
    s
}

fn cmd_fit(args: &FitArgs) -> Result<(), CliError> {
    let params = parse_pairs(&args.params)?;
    let refs: Vec<(&str, f64)> = params.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    let Family { generator, constraint, .. } = family(&args.dist, &refs).map_err(|e| CliError::Config(e.to_string()))?;
    let constraint = if args.free { Constraint::Free } else { constraint };
    let hp = parse_hp(&args.hp)?;

    let text = match &args.data {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?,
        None => {
            let mut s = String::new();
            io::stdin().read_to_string(&mut s).map_err(|e| CliError::Data(format!("stdin: {e}")))?;
            s
        }
    };
    let sample = parse_data(&text)?;
    for (i, &x) in sample.iter().enumerate() {
        generator
            .evaluate(x)
            .map_err(|e| CliError::Data(format!("observation {} = {x} is outside the support: {e}", i + 1)))?;
    }

    let wants = |m: FitMethod| args.method == m || args.method == FitMethod::All;
    let mut json_out = serde_json::Map::new();
    let mut text_out = format!("{} (n = {}, {})\n", args.dist, sample.len(), constraint_name(&constraint));
    let mut failures = Vec::new();

    if wants(FitMethod::Closed) {
        match estimate_constrained(&generator, &constraint, &sample, hp.sigma_prior()) {
            Ok(e) => {
                json_out.insert("closed".into(), estimate_json(&e));
                text_out += &estimate_text("closed form", &e);
            }
            Err(e) => failures.push(format!("closed: {e}")),
        }
    }
    for (m, key, label) in [(FitMethod::Map, "map", "numeric MAP"), (FitMethod::Ml, "ml", "numeric ML")] {
        if !wants(m) {
            continue;
        }
        let fit = if m == FitMethod::Map {
            fit_map_numeric(&generator, &constraint, &sample, &hp, None)
        } else {
            fit_ml_numeric(&generator, &constraint, &sample, None)
        };
        match fit {
            Ok(f) => {
                if !f.report.converged {
                    eprintln!(
                        "expfam: warning: {key} optimizer stopped at gradient norm {:e}",
                        f.report.final_gradient_norm
                    );
                }
                json_out.insert(key.into(), numeric_json(&f));
                text_out += &estimate_text(label, &f.estimate);
                let _ = writeln!(
                    text_out,
                    "  iterations = {}, converged = {}, gradient norm = {:e}",
                    f.report.iterations, f.report.converged, f.report.final_gradient_norm
                );
            }
            Err(e) => failures.push(format!("{key}: {e}")),
        }
    }

    if args.json {
        println!("{}", Value::Object(json_out));
    } else {
        print!("{text_out}");
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Estimation(failures.join("; ")))
    }
}

/// Worker count from EXPFAM_THREADS, else the machine's parallelism.
pub fn worker_count() -> usize {
    std::env::var("EXPFAM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// 17 significant digits, enough to round-trip any f64.
fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn results_csv(rows: &[MetricRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Io(format!("results.csv: {e}"));
    w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.distribution.clone(),
            r.method.to_string(),
            r.parameter.to_string(),
            r.n.to_string(),
            fmt_float(r.rel_bias),
            fmt_float(r.mc_se_bias),
            fmt_float(r.mse),
            fmt_float(r.mc_se_mse),
            r.failures.to_string(),
            r.seed.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Io(format!("results.csv: {e}")))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.config).map_err(|e| CliError::Config(format!("{}: {e}", args.config.display())))?;
    let mut config = SimConfig::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(grid) = &args.n_grid {
        config.n_grid = grid.clone();
    }
    if let Some(r) = args.reps {
        config.replications = r;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.validate().map_err(|e| CliError::Config(e.to_string()))?;

    let threads = worker_count();
    let started = unix_now();
    let GridResult { rows, failure_counts, errors } =
        run_grid_with_threads(&config, threads).map_err(|e| CliError::Config(e.to_string()))?;
    let finished = unix_now();

    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    let csv_bytes = results_csv(&rows)?;
    let csv_path = args.out.join("results.csv");
    fs::write(&csv_path, &csv_bytes).map_err(|e| io_err(&csv_path, e))?;

    let digest: String = Sha256::digest(&csv_bytes).iter().map(|b| format!("{b:02x}")).collect();
    let manifest = json!({
        "software": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "seed": config.seed,
        "workers": threads,
        "started_unix": started,
        "finished_unix": finished,
        "results": { "file": "results.csv", "rows": rows.len(), "sha256": digest },
        "cell_failures": failure_counts,
        "failed_cells": errors,
    });
    let manifest_path = args.out.join("manifest.json");
    let pretty = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&manifest_path, e))?;
    fs::write(&manifest_path, pretty + "\n").map_err(|e| io_err(&manifest_path, e))?;

    eprintln!("expfam: wrote {} rows to {}", rows.len(), csv_path.display());
    if errors.is_empty() {
        Ok(())
    } else {
        Err(CliError::PartialFailure(errors.len()))
    }
}

/// A results.csv row as read back for plotting.
#[derive(Debug, Clone, Deserialize)]
pub struct ResultRecord {
    pub distribution: String,
    pub method: String,
    pub parameter: String,
    pub n: usize,
    pub rel_bias: f64,
    pub mc_se_bias: f64,
    pub mse: f64,
    pub mc_se_mse: f64,
    pub failures: usize,
    pub seed: u64,
}

pub fn read_results(bytes: &[u8]) -> Result<Vec<ResultRecord>, CliError> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(|e| CliError::Data(format!("results CSV: {e}")))?;
    if header.iter().ne(RESULTS_HEADER.iter().copied()) {
        return Err(CliError::Data(format!("results CSV: unexpected header {header:?}")));
    }
    let rows = r
        .deserialize()
        .collect::<Result<Vec<ResultRecord>, _>>()
        .map_err(|e| CliError::Data(format!("results CSV: {e}")))?;
    if rows.is_empty() {
        return Err(CliError::Data("results CSV has no rows".into()));
    }
    Ok(rows)
}

fn file_stem(distribution: &str, parameter: &str) -> String {
    let clean: String = distribution.chars().map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' }).collect();
    format!("{}_{parameter}", clean.trim_end_matches('_'))
}

fn cmd_plot(args: &PlotArgs) -> Result<(), CliError> {
    let bytes = fs::read(&args.input).map_err(|e| CliError::Data(format!("{}: {e}", args.input.display())))?;
    let rows = read_results(&bytes)?;
    let mut groups: BTreeMap<(String, String), Vec<ResultRecord>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.distribution.clone(), r.parameter.clone())).or_default().push(r);
    }
    fs::create_dir_all(&args.out).map_err(|e| io_err(&args.out, e))?;
    for ((dist, param), rows) in &groups {
        let stem = file_stem(dist, param);
        let svg_path = args.out.join(format!("{stem}.svg"));
        fs::write(&svg_path, render_svg(dist, param, rows)).map_err(|e| io_err(&svg_path, e))?;
        let dat_path = args.out.join(format!("{stem}.dat"));
        fs::write(&dat_path, render_dat(dist, param, rows)).map_err(|e| io_err(&dat_path, e))?;
    }
    eprintln!("expfam: wrote {} plots to {}", groups.len(), args.out.display());
    Ok(())
}

/// Series keyed by method, each sorted by n: (n, value, se).
fn series(rows: &[ResultRecord], pick: impl Fn(&ResultRecord) -> (f64, f64)) -> BTreeMap<String, Vec<(usize, f64, f64)>> {
    let mut out: BTreeMap<String, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for r in rows {
        let (v, se) = pick(r);
        out.entry(r.method.clone()).or_default().push((r.n, v, se));
    }
    for s in out.values_mut() {
        s.sort_by_key(|p| p.0);
    }
    out
}

type Pick = fn(&ResultRecord) -> (f64, f64);

const METRICS: [(&str, Pick); 2] =
    [("rel_bias", |r| (r.rel_bias, r.mc_se_bias)), ("mse", |r| (r.mse, r.mc_se_mse))];

/// Tab-separated blocks, one per (metric, method), separated by blank lines.
pub fn render_dat(dist: &str, param: &str, rows: &[ResultRecord]) -> String {
    let mut s = format!("# distribution={dist}\tparameter={param}\n");
    for (metric, pick) in METRICS {
        for (method, pts) in series(rows, pick) {
            let _ = writeln!(s, "# metric={metric}\tmethod={method}\n# n\tvalue\tse");
            for (n, v, se) in pts {
                let _ = writeln!(s, "{n}\t{}\t{}", fmt_float(v), fmt_float(se));
            }
            s.push('\n');
        }
    }
    s
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Two panels (relative bias, MSE) against log n, one polyline per method.
pub fn render_svg(dist: &str, param: &str, rows: &[ResultRecord]) -> String {
    const PANEL_W: f64 = 360.0;
    const PANEL_H: f64 = 260.0;
    const MARGIN: f64 = 55.0;
    let width = 2.0 * (PANEL_W + MARGIN) + MARGIN;
    let height = PANEL_H + 2.0 * MARGIN + 40.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{} : {}</text>"#,
        width / 2.0,
        escape(dist),
        escape(param)
    );

    let methods: Vec<String> = series(rows, METRICS[0].1).into_keys().collect();
    for (panel, (metric, pick)) in METRICS.into_iter().enumerate() {
        let x0 = MARGIN + panel as f64 * (PANEL_W + MARGIN);
        let y0 = MARGIN;
        let data = series(rows, pick);
        let all: Vec<&(usize, f64, f64)> = data.values().flatten().collect();
        let (mut lx_min, mut lx_max) = all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
            let l = (p.0 as f64).ln();
            (a.min(l), b.max(l))
        });
        let (mut y_min, mut y_max) =
            all.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.1), b.max(p.1)));
        y_min = y_min.min(0.0);
        if lx_max - lx_min < 1e-12 {
            lx_min -= 0.5;
            lx_max += 0.5;
        }
        if !(y_max - y_min > 1e-300) {
            y_max = y_min + 1.0;
        }
        let px = |n: usize| x0 + ((n as f64).ln() - lx_min) / (lx_max - lx_min) * PANEL_W;
        let py = |v: f64| y0 + PANEL_H - (v - y_min) / (y_max - y_min) * PANEL_H;

        let _ = writeln!(
            s,
            r#"<rect x="{x0}" y="{y0}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{metric}</text>"#,
            x0 + PANEL_W / 2.0,
            y0 - 8.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">n (log scale)</text>"#,
            x0 + PANEL_W / 2.0,
            y0 + PANEL_H + 32.0
        );
        let mut ns: Vec<usize> = all.iter().map(|p| p.0).collect();
        ns.sort_unstable();
        ns.dedup();
        for n in ns {
            let x = px(n);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{}" stroke="black"/><text x="{x:.2}" y="{}" text-anchor="middle">{n}</text>"#,
                y0 + PANEL_H,
                y0 + PANEL_H + 4.0,
                y0 + PANEL_H + 16.0
            );
        }
        for k in 0..=4 {
            let v = y_min + (y_max - y_min) * k as f64 / 4.0;
            let y = py(v);
            let _ = writeln!(
                s,
                r#"<line x1="{}" y1="{y:.2}" x2="{x0}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.3e}</text>"#,
                x0 - 4.0,
                x0 - 6.0,
                y + 4.0
            );
        }
        for (i, method) in methods.iter().enumerate() {
            let Some(pts) = data.get(method) else { continue };
            let color = COLORS[i % COLORS.len()];
            let coords: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                coords.join(" ")
            );
            for p in pts {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, px(p.0), py(p.1));
            }
        }
    }
    let ly = height - 14.0;
    for (i, method) in methods.iter().enumerate() {
        let x = MARGIN + i as f64 * 140.0;
        let color = COLORS[i % COLORS.len()];
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            x + 20.0,
            x + 25.0,
            ly + 4.0,
            escape(method)
        );
    }
    s.push_str("</svg>\n");
    s
}
