//! Sweeps over precision with repeated random-angle trials, plus the
//! log-log statistics used to read off scaling exponents.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::baselines::{estimate_classical, estimate_exponential_mle};
use crate::error::{invalid, Error, Result};
use crate::oracle::ProblemInstance;
use crate::powerlaw::estimate_powerlaw;
use crate::qoprime::{
    estimate_qoprime_with_plan, optimize_params_constrained, QoPrimeParams, QoPrimePlan, SampleBudget,
    DEFAULT_SAMPLE_CAP,
};
use crate::report::{Algorithm, EstimateReport};
use crate::rng::{derive_seed, rng_from_seed};
use crate::schedules::{select_beta, validate_epsilon, PowerLawParams};

/// A parameter that is either fixed or derived from `(ε, γ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Choice<T> {
    #[default]
    Auto,
    Fixed(T),
}

impl<T: Copy> Choice<T> {
    pub fn fixed(self) -> Option<T> {
        match self {
            Choice::Auto => None,
            Choice::Fixed(v) => Some(v),
        }
    }
}

impl<T: FromStr> FromStr for Choice<T> {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Choice::Auto);
        }
        s.parse().map(Choice::Fixed).map_err(|_| format!("expected a number or 'auto', got '{s}'"))
    }
}

impl<T: fmt::Display> fmt::Display for Choice<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Choice::Auto => f.write_str("auto"),
            Choice::Fixed(v) => v.fmt(f),
        }
    }
}

impl<T: Serialize> Serialize for Choice<T> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Choice::Auto => s.serialize_str("auto"),
            Choice::Fixed(v) => v.serialize(s),
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Choice<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw<T> {
            Value(T),
            Text(String),
        }
        match Raw::<T>::deserialize(d)? {
            Raw::Value(v) => Ok(Choice::Fixed(v)),
            Raw::Text(s) if s.eq_ignore_ascii_case("auto") => Ok(Choice::Auto),
            Raw::Text(s) => Err(serde::de::Error::custom(format!("expected a number or 'auto', got '{s}'"))),
        }
    }
}

fn default_delta() -> f64 {
    1e-3
}

fn default_n_shot() -> u64 {
    100
}

fn default_noise_aware() -> bool {
    true
}

fn default_sample_cap() -> f64 {
    DEFAULT_SAMPLE_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub algorithm: Algorithm,
    /// Strictly decreasing precisions.
    pub epsilon_grid: Vec<f64>,
    #[serde(default)]
    pub gamma: f64,
    pub trials_per_point: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_n_shot")]
    pub n_shot: u64,
    #[serde(default)]
    pub beta: Choice<f64>,
    #[serde(default)]
    pub k: Choice<usize>,
    #[serde(default)]
    pub q: Choice<usize>,
    #[serde(default)]
    pub budget: SampleBudget,
    #[serde(default = "default_sample_cap")]
    pub sample_cap: f64,
    #[serde(default = "default_noise_aware")]
    pub noise_aware: bool,
    #[serde(default)]
    pub base_seed: u64,
    /// CSV destination; JSON lines go next to it with a `.jsonl` extension
    /// when `jsonl` is set.
    #[serde(default)]
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub jsonl: bool,
    /// Record wall-clock milliseconds; off by default so that output files
    /// are reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
}

impl SweepConfig {
    pub fn new(algorithm: Algorithm, epsilon_grid: Vec<f64>, trials_per_point: usize) -> Self {
        Self {
            algorithm,
            epsilon_grid,
            gamma: 0.0,
            trials_per_point,
            delta: default_delta(),
            n_shot: default_n_shot(),
            beta: Choice::Auto,
            k: Choice::Auto,
            q: Choice::Auto,
            budget: SampleBudget::Chernoff,
            sample_cap: DEFAULT_SAMPLE_CAP,
            noise_aware: true,
            base_seed: 0,
            output_path: None,
            jsonl: false,
            timing: false,
        }
    }

    /// Read a TOML file, or JSON when the extension is `.json`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: SweepConfig = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon_grid.is_empty() {
            return invalid("epsilon grid is empty");
        }
        if self.epsilon_grid.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return invalid("every epsilon must lie in (0, 1)");
        }
        if self.epsilon_grid.windows(2).any(|w| w[1] >= w[0]) {
            return invalid("epsilon grid must be strictly decreasing");
        }
        if self.trials_per_point == 0 {
            return invalid("trials_per_point must be >= 1");
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return invalid("gamma must be finite and >= 0");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid("delta must lie in (0, 1)");
        }
        if self.n_shot == 0 {
            return invalid("n_shot must be >= 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub epsilon: f64,
    pub gamma: f64,
    pub algorithm: Algorithm,
    pub trial: usize,
    pub theta_true: f64,
    /// NaN when the estimator returned an error.
    pub theta_hat: f64,
    pub abs_error: f64,
    pub oracle_calls: u64,
    pub max_depth: u64,
    pub success: bool,
    pub seed: u64,
    pub wall_ms: f64,
}

impl BenchmarkRecord {
    pub fn completed(&self) -> bool {
        self.theta_hat.is_finite()
    }
}

/// Estimator set up once per precision and shared across trials.
enum Runner {
    PowerLaw(PowerLawParams),
    QoPrime(Box<QoPrimePlan>),
    Classical { epsilon: f64, delta: f64 },
    ExponentialMle { epsilon: f64, n_shot: u64 },
    Unavailable(Error),
}

impl Runner {
    fn new(cfg: &SweepConfig, epsilon: f64) -> Self {
        let built = match cfg.algorithm {
            Algorithm::PowerLaw => powerlaw_params(epsilon, cfg.gamma, cfg.beta, cfg.n_shot).map(Runner::PowerLaw),
            Algorithm::QoPrime => qoprime_params(epsilon, cfg.gamma, cfg.delta, cfg.k, cfg.q)
                .map(|p| p.with_budget(cfg.budget).with_sample_cap(cfg.sample_cap))
                .and_then(|p| QoPrimePlan::new(&p))
                .map(|p| Runner::QoPrime(Box::new(p))),
            Algorithm::Classical => Ok(Runner::Classical { epsilon, delta: cfg.delta }),
            Algorithm::ExponentialMle => Ok(Runner::ExponentialMle { epsilon, n_shot: cfg.n_shot }),
        };
        built.unwrap_or_else(Runner::Unavailable)
    }

    fn run(&self, inst: &ProblemInstance, noise_aware: bool, seed: u64) -> Result<EstimateReport> {
        match self {
            Runner::PowerLaw(p) => estimate_powerlaw(inst, p, noise_aware, seed),
            Runner::QoPrime(plan) => estimate_qoprime_with_plan(inst, plan, seed),
            Runner::Classical { epsilon, delta } => estimate_classical(inst, *epsilon, *delta, seed),
            Runner::ExponentialMle { epsilon, n_shot } => {
                estimate_exponential_mle(inst, *epsilon, *n_shot, noise_aware, seed)
            }
            Runner::Unavailable(e) => Err(e.clone()),
        }
    }
}

/// Power-law parameters; automatic `β` comes from [`select_beta`] and
/// `β = 0` means the exponential schedule.
pub fn powerlaw_params(epsilon: f64, gamma: f64, beta: Choice<f64>, n_shot: u64) -> Result<PowerLawParams> {
    let beta = match beta {
        Choice::Fixed(b) => b,
        Choice::Auto => select_beta(epsilon, gamma)?,
    };
    if beta == 0.0 {
        validate_epsilon(epsilon)?;
        if n_shot == 0 {
            return invalid("n_shot must be >= 1");
        }
        return Ok(PowerLawParams { beta, epsilon, n_shot });
    }
    PowerLawParams::new(beta, epsilon, n_shot)
}

pub fn qoprime_params(
    epsilon: f64,
    gamma: f64,
    delta: f64,
    k: Choice<usize>,
    q: Choice<usize>,
) -> Result<QoPrimeParams> {
    let o = optimize_params_constrained(epsilon, gamma, delta, k.fixed(), q.fixed())?;
    QoPrimeParams::new(epsilon, delta, o.k, o.q, gamma)
}

/// Run every `(ε, trial)` pair. Estimator errors become failed records.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<BenchmarkRecord>> {
    cfg.validate()?;
    let runners: Vec<Runner> = cfg.epsilon_grid.iter().map(|&e| Runner::new(cfg, e)).collect();
    let jobs: Vec<(usize, usize)> =
        (0..cfg.epsilon_grid.len()).flat_map(|i| (0..cfg.trials_per_point).map(move |t| (i, t))).collect();
    let records = jobs
        .into_par_iter()
        .map(|(i, trial)| {
            let epsilon = cfg.epsilon_grid[i];
            let seed = derive_seed(derive_seed(cfg.base_seed, i as u64), trial as u64);
            let theta = rng_from_seed(derive_seed(seed, 0)).random_range(0.0..=FRAC_PI_2);
            let inst = ProblemInstance::new(theta, cfg.gamma)?;
            let rec = match runners[i].run(&inst, cfg.noise_aware, derive_seed(seed, 1)) {
                Ok(r) => {
                    let abs_error = (r.theta_hat - theta).abs();
                    BenchmarkRecord {
                        epsilon,
                        gamma: cfg.gamma,
                        algorithm: cfg.algorithm,
                        trial,
                        theta_true: theta,
                        theta_hat: r.theta_hat,
                        abs_error,
                        oracle_calls: r.oracle_calls,
                        max_depth: r.max_depth,
                        success: abs_error <= epsilon,
                        seed,
                        wall_ms: if cfg.timing { r.wall_ms } else { 0.0 },
                    }
                }
                Err(_) => BenchmarkRecord {
                    epsilon,
                    gamma: cfg.gamma,
                    algorithm: cfg.algorithm,
                    trial,
                    theta_true: theta,
                    theta_hat: f64::NAN,
                    abs_error: f64::NAN,
                    oracle_calls: 0,
                    max_depth: 0,
                    success: false,
                    seed,
                    wall_ms: 0.0,
                },
            };
            Ok(rec)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(records)
}

pub const CSV_COLUMNS: [&str; 12] = [
    "epsilon",
    "gamma",
    "algorithm",
    "trial",
    "theta_true",
    "theta_hat",
    "abs_error",
    "oracle_calls",
    "max_depth",
    "success",
    "seed",
    "wall_ms",
];

pub fn write_csv<W: Write>(records: &[BenchmarkRecord], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_COLUMNS)?;
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_jsonl<W: Write>(records: &[BenchmarkRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<BenchmarkRecord>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Median of `value` over completed records, per precision, in decreasing
/// order of `ε`.
pub fn medians_by_epsilon(records: &[BenchmarkRecord], value: impl Fn(&BenchmarkRecord) -> f64) -> Vec<(f64, f64)> {
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.completed()) {
        groups.entry(r.epsilon.to_bits()).or_default().push(value(r));
    }
    let mut out: Vec<(f64, f64)> = groups
        .into_iter()
        .filter_map(|(e, mut v)| median(&mut v).map(|m| (f64::from_bits(e), m)))
        .collect();
    out.sort_by(|a, b| b.0.total_cmp(&a.0));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Least squares of `ln y` on `ln x`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return invalid("x and y lengths differ");
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateData(format!("need >= 3 points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::DegenerateData("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let scale = 1e-12 * (1.0 + mx.abs());
    if sxx <= scale * scale {
        return Err(Error::DegenerateData("all x values are equal".into()));
    }
    if syy <= 1e-24 * (1.0 + my * my) {
        return Err(Error::DegenerateData("all y values are equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if lx.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(SlopeFit { slope, intercept, stderr, points: lx.len() })
}

/// Slope of log median oracle calls against log `ε`.
pub fn regression_slope(records: &[BenchmarkRecord]) -> Result<SlopeFit> {
    let pts = medians_by_epsilon(records, |r| r.oracle_calls as f64);
    if pts.len() < 3 {
        return Err(Error::DegenerateData(format!("need >= 3 distinct epsilons, got {}", pts.len())));
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    fit_loglog(&xs, &ys)
}

/// Slopes between neighbouring points, placed at the geometric mean of
/// their `x` values.
pub fn instantaneous_exponent_xy(xs: &[f64], ys: &[f64]) -> Result<Vec<(f64, f64)>> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return invalid("need at least two paired points");
    }
    Ok(xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| ((x[0] * x[1]).sqrt(), (y[1] / y[0]).ln() / (x[1] / x[0]).ln()))
        .collect())
}

/// `d log N / d log ε` from log median oracle calls.
pub fn instantaneous_exponent(records: &[BenchmarkRecord]) -> Result<Vec<(f64, f64)>> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = medians_by_epsilon(records, |r| r.oracle_calls as f64).into_iter().unzip();
    instantaneous_exponent_xy(&xs, &ys)
}
