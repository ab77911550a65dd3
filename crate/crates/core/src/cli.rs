//! `qae` command-line front end.
//!
//! Exit codes: 0 on success, 1 on usage or I/O errors, 2 when an estimate
//! fails (estimator error, or a known angle missed by more than `ε`).

use std::ffi::OsString;
use std::f64::consts::FRAC_PI_2;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;

use crate::baselines::{estimate_classical, estimate_exponential_mle};
use crate::bench::{
    fit_loglog, medians_by_epsilon, powerlaw_params, qoprime_params, run_sweep, write_csv, write_jsonl, Choice,
    SweepConfig,
};
use crate::error::{Error, Result};
use crate::oracle::{sample_batch, Basis, ProblemInstance};
use crate::powerlaw::{boost_confidence, estimate_powerlaw_with_posterior};
use crate::qoprime::{estimate_qoprime, optimize_params, optimize_params_realized, SampleBudget};
use crate::report::{Algorithm, EstimateReport};
use crate::rng::{derive_seed, rng_from_seed};
use crate::schedules::{loglikelihood_surface, power_law_schedule, PowerLawParams, Schedule};

#[derive(Debug, Parser)]
#[command(name = "qae", version, about = "Low-depth quantum amplitude estimation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one estimator on one angle and print its report.
    Estimate(EstimateArgs),
    /// Choose QoPrime's (k, q) for a precision and noise rate.
    Optimize(OptimizeArgs),
    /// Repeat an estimator over a precision grid and write per-trial records.
    Sweep(SweepArgs),
    /// Write the log-likelihood surface of a sampled schedule.
    Surface(SurfaceArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Powerlaw,
    Qoprime,
    Classical,
    ExpMle,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Powerlaw => Algorithm::PowerLaw,
            AlgoArg::Qoprime => Algorithm::QoPrime,
            AlgoArg::Classical => Algorithm::Classical,
            AlgoArg::ExpMle => Algorithm::ExponentialMle,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BudgetArg {
    Chernoff,
    ExactBinomial,
}

impl From<BudgetArg> for SampleBudget {
    fn from(b: BudgetArg) -> Self {
        match b {
            BudgetArg::Chernoff => SampleBudget::Chernoff,
            BudgetArg::ExactBinomial => SampleBudget::ExactBinomial,
        }
    }
}

/// An angle in `[0, π/2]`, or `random` for a uniform draw from the seed.
pub type ThetaArg = Choice<f64>;

fn parse_theta(s: &str) -> std::result::Result<ThetaArg, String> {
    if s.eq_ignore_ascii_case("random") {
        return Ok(Choice::Auto);
    }
    s.parse::<f64>().map(Choice::Fixed).map_err(|_| format!("expected an angle or 'random', got '{s}'"))
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    /// Hidden angle in radians, or `random`.
    #[arg(long, value_parser = parse_theta, default_value = "random")]
    pub theta: ThetaArg,
    /// Target additive accuracy in θ.
    #[arg(long)]
    pub epsilon: f64,
    /// Depolarizing rate per oracle call.
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    /// Failure probability (qoprime, classical).
    #[arg(long)]
    pub delta: Option<f64>,
    /// Shots per schedule entry (powerlaw, exp-mle).
    #[arg(long)]
    pub n_shot: Option<u64>,
    /// Power-law exponent in (0, 1], or `auto` (powerlaw).
    #[arg(long)]
    pub beta: Option<Choice<f64>>,
    /// Number of moduli, or `auto` (qoprime).
    #[arg(long)]
    pub k: Option<Choice<usize>>,
    /// Moduli per group, or `auto` (qoprime).
    #[arg(long)]
    pub q: Option<Choice<usize>>,
    /// Shot-count rule (qoprime).
    #[arg(long, value_enum)]
    pub budget: Option<BudgetArg>,
    /// Maximum worst-case oracle calls of a plan (qoprime).
    #[arg(long)]
    pub sample_cap: Option<f64>,
    /// Odd number of independent runs to take the consensus of (powerlaw).
    #[arg(long)]
    pub repetitions: Option<usize>,
    /// Model the noise rate in the likelihood (powerlaw, exp-mle).
    #[arg(long, action = clap::ArgAction::Set)]
    pub noise_aware: Option<bool>,
    /// Write the final posterior as CSV (powerlaw, exp-mle).
    #[arg(long)]
    pub posterior_csv: Option<PathBuf>,
    #[arg(long, env = "QAE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    /// Price the actual coprime products instead of the closed form.
    #[arg(long)]
    pub realized: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// TOML (or .json) sweep configuration; replaces the inline flags.
    #[arg(long, conflicts_with_all = ["algo", "epsilons", "trials"])]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, required_unless_present = "config")]
    pub algo: Option<AlgoArg>,
    /// Comma-separated, strictly decreasing precisions.
    #[arg(long, value_delimiter = ',', required_unless_present = "config")]
    pub epsilons: Option<Vec<f64>>,
    #[arg(long, required_unless_present = "config")]
    pub trials: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,
    #[arg(long, default_value_t = 100)]
    pub n_shot: u64,
    #[arg(long, default_value = "auto")]
    pub beta: Choice<f64>,
    #[arg(long, default_value = "auto")]
    pub k: Choice<usize>,
    #[arg(long, default_value = "auto")]
    pub q: Choice<usize>,
    #[arg(long, value_enum, default_value = "chernoff")]
    pub budget: BudgetArg,
    #[arg(long, default_value_t = crate::qoprime::DEFAULT_SAMPLE_CAP)]
    pub sample_cap: f64,
    #[arg(long, env = "QAE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Also write JSON lines here.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Record wall-clock times (makes output non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    /// JSON list of [depth, shots] pairs, or a TOML/JSON table with
    /// beta, epsilon and n_shot.
    #[arg(long)]
    pub schedule_config: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5, conflicts_with = "schedule_config")]
    pub beta: f64,
    #[arg(long, default_value_t = 1e-2, conflicts_with = "schedule_config")]
    pub epsilon: f64,
    #[arg(long, default_value_t = 100, conflicts_with = "schedule_config")]
    pub n_shot: u64,
    #[arg(long, value_parser = parse_theta, default_value = "random")]
    pub theta: ThetaArg,
    #[arg(long, default_value_t = 0.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 1000)]
    pub grid_points: usize,
    #[arg(long, env = "QAE_SEED", default_value_t = 0)]
    pub seed: u64,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Parse `args` (including the program name) and execute.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(&a, out, err),
        Command::Optimize(a) => cmd_optimize(&a, out),
        Command::Sweep(a) => cmd_sweep(&a, out, err),
        Command::Surface(a) => cmd_surface(&a, out, err),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if e.is_estimation_failure() {
                2
            } else {
                1
            }
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn resolve_theta(theta: ThetaArg, seed: u64, err: &mut dyn Write) -> Result<f64> {
    match theta {
        Choice::Fixed(t) => Ok(t),
        Choice::Auto => {
            let t = rng_from_seed(derive_seed(seed, u64::MAX)).random_range(0.0..=FRAC_PI_2);
            writeln!(err, "theta = {t}")?;
            Ok(t)
        }
    }
}

fn reject_flags(algo: AlgoArg, flags: &[(&str, bool, &[AlgoArg])]) -> Result<()> {
    for (name, present, allowed) in flags {
        if *present && !allowed.contains(&algo) {
            return Err(usage(format!("--{name} does not apply to --algo {}", Algorithm::from(algo))));
        }
    }
    Ok(())
}

fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    use AlgoArg::*;
    reject_flags(
        a.algo,
        &[
            ("delta", a.delta.is_some(), &[Qoprime, Classical]),
            ("n-shot", a.n_shot.is_some(), &[Powerlaw, ExpMle]),
            ("beta", a.beta.is_some(), &[Powerlaw]),
            ("k", a.k.is_some(), &[Qoprime]),
            ("q", a.q.is_some(), &[Qoprime]),
            ("budget", a.budget.is_some(), &[Qoprime]),
            ("sample-cap", a.sample_cap.is_some(), &[Qoprime]),
            ("repetitions", a.repetitions.is_some(), &[Powerlaw]),
            ("noise-aware", a.noise_aware.is_some(), &[Powerlaw, ExpMle]),
            ("posterior-csv", a.posterior_csv.is_some(), &[Powerlaw, ExpMle]),
        ],
    )?;
    let theta = resolve_theta(a.theta, a.seed, err)?;
    let inst = ProblemInstance::new(theta, a.gamma)?;
    let delta = a.delta.unwrap_or(1e-3);
    let n_shot = a.n_shot.unwrap_or(100);
    let noise_aware = a.noise_aware.unwrap_or(true);
    let report = match a.algo {
        Powerlaw | ExpMle => {
            let beta = if a.algo == ExpMle { Choice::Fixed(0.0) } else { a.beta.unwrap_or(Choice::Auto) };
            let params = powerlaw_params(a.epsilon, a.gamma, beta, n_shot)?;
            let reps = a.repetitions.unwrap_or(1);
            let report = if a.algo == ExpMle {
                estimate_exponential_mle(&inst, a.epsilon, n_shot, noise_aware, a.seed)?
            } else if reps == 1 {
                estimate_powerlaw_with_posterior(&inst, &params, noise_aware, a.seed)?.0
            } else {
                boost_confidence(&inst, &params, reps, noise_aware, a.seed)?
            };
            if let Some(path) = &a.posterior_csv {
                let (_, grid) = estimate_powerlaw_with_posterior(&inst, &params, noise_aware, a.seed)?;
                grid.write_csv(BufWriter::new(File::create(path)?))?;
            }
            report
        }
        Qoprime => {
            let params = qoprime_params(
                a.epsilon,
                a.gamma,
                delta,
                a.k.unwrap_or(Choice::Auto),
                a.q.unwrap_or(Choice::Auto),
            )?
            .with_budget(a.budget.map_or(SampleBudget::Chernoff, SampleBudget::from))
            .with_sample_cap(a.sample_cap.unwrap_or(crate::qoprime::DEFAULT_SAMPLE_CAP));
            estimate_qoprime(&inst, &params, a.seed)?
        }
        Classical => estimate_classical(&inst, a.epsilon, delta, a.seed)?,
    }
    .with_truth(theta);
    if a.json {
        writeln!(out, "{}", report.to_json_pretty())?;
    } else {
        print_report(&report, out)?;
    }
    Ok(if report.success == Some(false) { 2 } else { 0 })
}

fn print_report(r: &EstimateReport, out: &mut dyn Write) -> Result<()> {
    writeln!(out, "algorithm     {}", r.algorithm)?;
    writeln!(out, "epsilon       {:e}", r.epsilon)?;
    writeln!(out, "gamma         {:e}", r.gamma)?;
    if let Some(t) = r.theta_true {
        writeln!(out, "theta_true    {t}")?;
    }
    writeln!(out, "theta_hat     {}", r.theta_hat)?;
    if let Some(e) = r.abs_error() {
        writeln!(out, "abs_error     {e:e}")?;
    }
    if let Some(s) = r.success {
        writeln!(out, "success       {s}")?;
    }
    writeln!(out, "oracle_calls  {}", r.oracle_calls)?;
    writeln!(out, "max_depth     {}", r.max_depth)?;
    let d = &r.diagnostics;
    if let Some(b) = d.beta {
        writeln!(out, "beta          {b}")?;
    }
    if let Some(n) = d.rounds {
        writeln!(out, "rounds        {n}")?;
    }
    if let Some(s) = d.saturated {
        writeln!(out, "saturated     {s}")?;
    }
    if let Some(q) = &d.qoprime {
        writeln!(out, "k, q          {}, {}", q.k, q.q)?;
        writeln!(out, "moduli        {:?}", q.moduli)?;
        writeln!(out, "N             {}", q.product)?;
        for g in &q.groups {
            writeln!(
                out,
                "group {:<3}     N_i={} depth={} branch={:?} l_hat={:.4} t={} samples={}",
                g.index, g.n_i, g.depth, g.branch, g.l_hat, g.parity, g.samples_used
            )?;
        }
    }
    if let Some(c) = &d.classical {
        writeln!(out, "basis         {:?}", c.basis)?;
        writeln!(out, "shots         {} + {}", c.crude_shots, c.shots)?;
    }
    Ok(())
}

fn cmd_optimize(a: &OptimizeArgs, out: &mut dyn Write) -> Result<i32> {
    let o = if a.realized {
        optimize_params_realized(a.epsilon, a.gamma, a.delta)?
    } else {
        optimize_params(a.epsilon, a.gamma, a.delta)?
    };
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&o)?)?;
    } else {
        writeln!(out, "k*               {}", o.k)?;
        writeln!(out, "q*               {}", o.q)?;
        writeln!(out, "predicted_calls  {:e}", o.predicted_calls)?;
        writeln!(out, "predicted_depth  {:.1}", o.predicted_depth)?;
    }
    Ok(0)
}

fn sweep_config(a: &SweepArgs) -> Result<SweepConfig> {
    let mut cfg = match &a.config {
        Some(path) => SweepConfig::from_file(path)?,
        None => {
            let mut c = SweepConfig::new(
                a.algo.expect("required by clap").into(),
                a.epsilons.clone().expect("required by clap"),
                a.trials.expect("required by clap"),
            );
            c.gamma = a.gamma;
            c.delta = a.delta;
            c.n_shot = a.n_shot;
            c.beta = a.beta;
            c.k = a.k;
            c.q = a.q;
            c.budget = a.budget.into();
            c.sample_cap = a.sample_cap;
            c.base_seed = a.seed;
            c.timing = a.timing;
            c
        }
    };
    if a.output.is_some() {
        cfg.output_path = a.output.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let cfg = sweep_config(a)?;
    let records = match a.jobs {
        Some(0) => return Err(usage("--jobs must be >= 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Io(e.to_string()))?
            .install(|| run_sweep(&cfg))?,
        None => run_sweep(&cfg)?,
    };
    match &cfg.output_path {
        Some(p) => write_csv(&records, BufWriter::new(File::create(p)?))?,
        None => write_csv(&records, &mut *out)?,
    }
    let jsonl_path = a.jsonl.clone().or_else(|| {
        cfg.jsonl.then(|| cfg.output_path.as_deref().map(|p| p.with_extension("jsonl"))).flatten()
    });
    if let Some(p) = jsonl_path {
        write_jsonl(&records, BufWriter::new(File::create(p)?))?;
    }
    let medians = medians_by_epsilon(&records, |r| r.oracle_calls as f64);
    for &(e, calls) in &medians {
        let at: Vec<_> = records.iter().filter(|r| r.epsilon == e).collect();
        let failures = at.iter().filter(|r| !r.success).count();
        writeln!(err, "epsilon {e:e}: median calls {calls:e}, failures {failures}/{}", at.len())?;
    }
    if medians.len() >= 3 {
        let (xs, ys): (Vec<f64>, Vec<f64>) = medians.into_iter().unzip();
        if let Ok(fit) = fit_loglog(&xs, &ys) {
            writeln!(err, "slope {:.4} +/- {:.4}", fit.slope, fit.stderr)?;
        }
    }
    Ok(0)
}

fn load_schedule(path: &Path) -> Result<Schedule> {
    let text = std::fs::read_to_string(path)?;
    if let Ok(s) = Schedule::from_json(&text) {
        return Ok(s);
    }
    let params: PowerLawParams = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text).map_err(|e| Error::Format(e.to_string()))?
    };
    params.validate()?;
    power_law_schedule(&params)
}

fn cmd_surface(a: &SurfaceArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    if a.grid_points == 0 {
        return Err(usage("--grid-points must be >= 1"));
    }
    let schedule = match &a.schedule_config {
        Some(p) => load_schedule(p)?,
        None => power_law_schedule(&PowerLawParams::new(a.beta, a.epsilon, a.n_shot)?)?,
    };
    let theta = resolve_theta(a.theta, a.seed, err)?;
    let inst = ProblemInstance::new(theta, a.gamma)?;
    let observed = schedule
        .entries()
        .iter()
        .enumerate()
        .map(|(k, e)| sample_batch(&inst, e.depth, Basis::Standard, false, e.shots, derive_seed(a.seed, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    let grid: Vec<f64> = if a.grid_points == 1 {
        vec![0.0]
    } else {
        (0..a.grid_points).map(|j| FRAC_PI_2 * j as f64 / (a.grid_points - 1) as f64).collect()
    };
    let values = loglikelihood_surface(&schedule, &observed, &grid, a.gamma)?;
    let write = |w: &mut dyn Write| -> Result<()> {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["theta", "loglik"])?;
        for (t, v) in grid.iter().zip(&values) {
            csv.write_record([t.to_string(), v.to_string()])?;
        }
        csv.flush()?;
        Ok(())
    };
    match &a.output {
        Some(p) => write(&mut BufWriter::new(File::create(p)?))?,
        None => write(out)?,
    }
    Ok(0)
}
