//! Power-law amplitude estimation: grid Bayesian updates over a power-law
//! query schedule, reporting the posterior mode.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::{outcome_probability_with, sample_batch, Basis, MeasurementBatch, ProblemInstance};
use crate::report::{saturating_calls, Algorithm, EstimateReport};
use crate::rng::derive_seed;
use crate::schedules::{
    ceil_tol, exponential_schedule, power_law_schedule, validate_epsilon, xlogy, PowerLawParams, Schedule,
};

/// Log-weights over `θ_t = min(t ε/2, π/2)`, `t = 0..=ceil(π/ε)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    epsilon: f64,
    spacing: f64,
    log_weights: Vec<f64>,
}

impl PosteriorGrid {
    /// Uniform prior at spacing `ε/2`.
    pub fn new(epsilon: f64) -> Result<Self> {
        validate_epsilon(epsilon)?;
        let spacing = epsilon / 2.0;
        let top = ceil_tol(FRAC_PI_2 / spacing) as usize;
        let n = top + 1;
        Ok(Self { epsilon, spacing, log_weights: vec![-(n as f64).ln(); n] })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    pub fn theta(&self, t: usize) -> f64 {
        (t as f64 * self.spacing).min(FRAC_PI_2)
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|t| self.theta(t))
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Multiply in `p0^{n0} p1^{n1}` at `depth` and renormalize.
    pub fn update(&mut self, depth: u64, n0: u64, n1: u64, gamma: f64) -> Result<()> {
        for t in 0..self.len() {
            let p1 = outcome_probability_with(self.theta(t), gamma, depth, Basis::Standard, false);
            self.log_weights[t] += xlogy(n0, 1.0 - p1) + xlogy(n1, p1);
        }
        self.normalize()
    }

    pub fn update_batch(&mut self, batch: &MeasurementBatch, gamma: f64) -> Result<()> {
        if batch.basis != Basis::Standard {
            return invalid("posterior updates take standard-basis batches");
        }
        self.update(batch.depth, batch.count_zero(), batch.count_one, gamma)
    }

    /// Shift log-weights so that they exponentiate to a distribution.
    fn normalize(&mut self) -> Result<()> {
        let max = self.log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(Error::PosteriorUnderflow);
        }
        let lse = max + self.log_weights.iter().map(|w| (w - max).exp()).sum::<f64>().ln();
        self.log_weights.iter_mut().for_each(|w| *w -= lse);
        Ok(())
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Index of the first maximum.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (t, &w) in self.log_weights.iter().enumerate() {
            if w > self.log_weights[best] {
                best = t;
            }
        }
        best
    }

    pub fn mode(&self) -> f64 {
        self.theta(self.argmax())
    }

    /// CSV with columns `theta,probability`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["theta", "probability"])?;
        for (t, p) in self.probabilities().into_iter().enumerate() {
            out.write_record([self.theta(t).to_string(), p.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sample every schedule entry and fold the counts into a fresh posterior.
///
/// Entries at equal depth are combined before updating; the log-likelihood
/// is additive so the posterior is the same as updating entry by entry.
pub fn run_schedule(
    inst: &ProblemInstance,
    schedule: &Schedule,
    epsilon: f64,
    likelihood_gamma: f64,
    rng_seed: u64,
) -> Result<PosteriorGrid> {
    let mut grid = PosteriorGrid::new(epsilon)?;
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for (k, e) in schedule.entries().iter().enumerate() {
        let b = sample_batch(inst, e.depth, Basis::Standard, false, e.shots, derive_seed(rng_seed, k as u64))?;
        let c = counts.entry(e.depth).or_insert((0, 0));
        c.0 += b.count_zero();
        c.1 += b.count_one;
    }
    for (depth, (n0, n1)) in counts {
        grid.update(depth, n0, n1, likelihood_gamma)?;
    }
    Ok(grid)
}

fn schedule_for(params: &PowerLawParams) -> Result<Schedule> {
    if params.beta == 0.0 {
        exponential_schedule(params.epsilon, params.n_shot)
    } else {
        power_law_schedule(params)
    }
}

/// Estimate `θ` with the power-law schedule for `params`; `β = 0` selects the
/// exponential schedule. With `noise_aware` the likelihood uses the
/// instance's `γ`, otherwise the noiseless model.
pub fn estimate_powerlaw(
    inst: &ProblemInstance,
    params: &PowerLawParams,
    noise_aware: bool,
    rng_seed: u64,
) -> Result<EstimateReport> {
    estimate_powerlaw_with_posterior(inst, params, noise_aware, rng_seed).map(|(r, _)| r)
}

/// Same as [`estimate_powerlaw`] but also returns the final posterior.
pub fn estimate_powerlaw_with_posterior(
    inst: &ProblemInstance,
    params: &PowerLawParams,
    noise_aware: bool,
    rng_seed: u64,
) -> Result<(EstimateReport, PosteriorGrid)> {
    let start = Instant::now();
    let schedule = schedule_for(params)?;
    let gamma = if noise_aware { inst.gamma() } else { 0.0 };
    let grid = run_schedule(inst, &schedule, params.epsilon, gamma, rng_seed)?;
    let algorithm = if params.beta == 0.0 { Algorithm::ExponentialMle } else { Algorithm::PowerLaw };
    let mut r = EstimateReport::new(algorithm, params.epsilon, inst.gamma(), grid.mode());
    r.oracle_calls = saturating_calls(schedule.total_calls());
    r.max_depth = schedule.max_depth();
    r.diagnostics.beta = Some(params.beta);
    r.diagnostics.n_shot = Some(params.n_shot);
    r.diagnostics.rounds = Some(schedule.len());
    r.diagnostics.noise_aware = Some(noise_aware);
    r.schedule_used = Some(schedule);
    r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((r, grid))
}

fn repetition_seed(seed: u64, r: usize) -> u64 {
    if r == 0 {
        seed
    } else {
        derive_seed(seed, r as u64)
    }
}

/// Pick the estimate backed by the most others within `radius`, then return
/// the (lower) median of that cluster.
pub fn cluster_median(estimates: &[f64], radius: f64) -> f64 {
    let mut best: Vec<f64> = Vec::new();
    for &x in estimates {
        let members: Vec<f64> = estimates.iter().copied().filter(|y| (y - x).abs() <= radius).collect();
        if members.len() > best.len() {
            best = members;
        }
    }
    best.sort_by(f64::total_cmp);
    best[(best.len() - 1) / 2]
}

/// Repeat [`estimate_powerlaw`] an odd number of times and keep the
/// consensus estimate. Oracle calls add up across repetitions.
pub fn boost_confidence(
    inst: &ProblemInstance,
    params: &PowerLawParams,
    repetitions: usize,
    noise_aware: bool,
    rng_seed: u64,
) -> Result<EstimateReport> {
    if repetitions == 0 || repetitions % 2 == 0 {
        return invalid(format!("repetitions must be odd and >= 1, got {repetitions}"));
    }
    let start = Instant::now();
    let runs: Vec<EstimateReport> = (0..repetitions)
        .into_par_iter()
        .map(|r| estimate_powerlaw(inst, params, noise_aware, repetition_seed(rng_seed, r)))
        .collect::<Result<_>>()?;
    if repetitions == 1 {
        return Ok(runs.into_iter().next().expect("one run"));
    }
    let estimates: Vec<f64> = runs.iter().map(|r| r.theta_hat).collect();
    let mut out = runs[0].clone();
    out.theta_hat = cluster_median(&estimates, params.epsilon);
    out.oracle_calls = runs.iter().fold(0u64, |acc, r| acc.saturating_add(r.oracle_calls));
    out.max_depth = runs.iter().map(|r| r.max_depth).max().unwrap_or(0);
    out.diagnostics.repetitions = Some(repetitions);
    out.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_covers_both_endpoints() {
        let g = PosteriorGrid::new(1e-2).unwrap();
        assert_eq!(g.len(), 316);
        assert_eq!(g.theta(0), 0.0);
        assert_eq!(g.theta(g.len() - 1), FRAC_PI_2);
        let total: f64 = g.probabilities().iter().sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn update_keeps_posterior_normalized() {
        let mut g = PosteriorGrid::new(1e-2).unwrap();
        for (depth, n0, n1) in [(0, 70, 30), (1, 10, 90), (3, 55, 45), (7, 100, 0)] {
            g.update(depth, n0, n1, 0.0).unwrap();
            let total: f64 = g.probabilities().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn contradictory_data_underflows() {
        // Ones at depth 0 rule out t = 0; zeros at depth 0 rule out θ = π/2;
        // the remaining mass is then killed by a weight reset.
        let mut g = PosteriorGrid::new(0.5).unwrap();
        g.update(0, 1, 1, 0.0).unwrap();
        assert_eq!(g.log_weights()[0], f64::NEG_INFINITY);
        g.log_weights.iter_mut().for_each(|w| *w = f64::NEG_INFINITY);
        assert_eq!(g.update(0, 1, 0, 0.0), Err(Error::PosteriorUnderflow));
    }

    #[test]
    fn zero_angle_is_recovered_exactly() {
        let inst = ProblemInstance::noiseless(0.0).unwrap();
        for beta in [0.3, 0.5, 1.0] {
            let p = PowerLawParams::new(beta, 1e-2, 20).unwrap();
            assert_eq!(estimate_powerlaw(&inst, &p, false, 3).unwrap().theta_hat, 0.0);
        }
    }

    #[test]
    fn report_accounts_calls_and_depth() {
        let inst = ProblemInstance::noiseless(0.7).unwrap();
        let p = PowerLawParams::new(0.5, 1e-2, 100).unwrap();
        let r = estimate_powerlaw(&inst, &p, false, 11).unwrap();
        let s = power_law_schedule(&p).unwrap();
        assert_eq!(r.oracle_calls as u128, s.total_calls());
        assert_eq!(r.max_depth, s.max_depth());
        assert_eq!(r.schedule_used.as_ref(), Some(&s));
        assert!((r.theta_hat - 0.7).abs() <= 1e-2);
    }

    #[test]
    fn beta_zero_runs_exponential_schedule() {
        let inst = ProblemInstance::noiseless(0.4).unwrap();
        let p = PowerLawParams { beta: 0.0, epsilon: 1.0 / 64.0, n_shot: 50 };
        let r = estimate_powerlaw(&inst, &p, false, 5).unwrap();
        assert_eq!(r.algorithm, Algorithm::ExponentialMle);
        assert_eq!(r.max_depth, 64);
    }

    #[test]
    fn single_repetition_matches_single_run() {
        let inst = ProblemInstance::noiseless(0.9).unwrap();
        let p = PowerLawParams::new(0.5, 1e-2, 30).unwrap();
        let a = estimate_powerlaw(&inst, &p, false, 77).unwrap();
        let b = boost_confidence(&inst, &p, 1, false, 77).unwrap();
        assert_eq!(a.theta_hat, b.theta_hat);
        assert_eq!(a.oracle_calls, b.oracle_calls);
        assert!(boost_confidence(&inst, &p, 2, false, 77).is_err());
        assert!(boost_confidence(&inst, &p, 0, false, 77).is_err());
    }

    #[test]
    fn cluster_median_prefers_majority() {
        assert_eq!(cluster_median(&[0.5, 0.501, 0.9, 0.499, 0.1], 0.01), 0.5);
        assert_eq!(cluster_median(&[0.3], 0.01), 0.3);
    }

    #[test]
    fn posterior_csv_has_header_and_rows() {
        let g = PosteriorGrid::new(0.5).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("theta,probability\n"));
        assert_eq!(text.lines().count(), g.len() + 1);
    }
}
