//! Query schedules and their Fisher information.
//!
//! A schedule is an ordered list of `(depth, shots)` pairs. The power-law
//! family `m_k = floor(k^((1-β)/(2β)))` interpolates between the flat
//! classical schedule (`β = 1`) and the exponential schedule (`β → 0`).

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::{calls_per_circuit, outcome_probability_with, Basis, MeasurementBatch};

/// Upper bound on schedule length; beyond this the sampling loop and the
/// schedule itself stop being desk-scale.
pub const MAX_ROUNDS: u64 = 20_000_000;

/// Denominator threshold below which the noisy Fisher term is treated as
/// divergent.
pub const FISHER_DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "(u64, u64)", into = "(u64, u64)")]
pub struct ScheduleEntry {
    pub depth: u64,
    pub shots: u64,
}

impl From<(u64, u64)> for ScheduleEntry {
    fn from((depth, shots): (u64, u64)) -> Self {
        Self { depth, shots }
    }
}

impl From<ScheduleEntry> for (u64, u64) {
    fn from(e: ScheduleEntry) -> Self {
        (e.depth, e.shots)
    }
}

/// Ordered query plan. Serializes as a JSON list of `[depth, shots]` pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule {
    entries: Vec<ScheduleEntry>,
}

impl Schedule {
    pub fn new(entries: Vec<ScheduleEntry>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|e| e.shots == 0) {
            return invalid(format!("schedule entry {i} has zero shots"));
        }
        Ok(Self { entries })
    }

    pub fn from_pairs(pairs: &[(u64, u64)]) -> Result<Self> {
        Self::new(pairs.iter().copied().map(ScheduleEntry::from).collect())
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ_k N_k (2 m_k + 1)`.
    pub fn total_calls(&self) -> u128 {
        self.entries.iter().map(|e| e.shots as u128 * calls_per_circuit(e.depth)).sum()
    }

    pub fn max_depth(&self) -> u64 {
        self.entries.iter().map(|e| e.depth).max().unwrap_or(0)
    }

    pub fn concat(&self, other: &Schedule) -> Schedule {
        let mut entries = self.entries.clone();
        entries.extend_from_slice(&other.entries);
        Schedule { entries }
    }

    /// Total shots per distinct depth, ascending by depth.
    pub fn shots_by_depth(&self) -> BTreeMap<u64, u64> {
        let mut out = BTreeMap::new();
        for e in &self.entries {
            *out.entry(e.depth).or_insert(0) += e.shots;
        }
        out
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let s: Schedule = serde_json::from_str(s)?;
        Schedule::new(s.entries)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("schedule serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawParams {
    pub beta: f64,
    pub epsilon: f64,
    pub n_shot: u64,
}

impl PowerLawParams {
    pub fn new(beta: f64, epsilon: f64, n_shot: u64) -> Result<Self> {
        let p = Self { beta, epsilon, n_shot };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return invalid(format!("beta must lie in (0, 1], got {}", self.beta));
        }
        validate_epsilon(self.epsilon)?;
        if self.n_shot == 0 {
            return invalid("n_shot must be >= 1");
        }
        Ok(())
    }

    /// Depth exponent `(1-β)/(2β)`.
    pub fn depth_exponent(&self) -> f64 {
        (1.0 - self.beta) / (2.0 * self.beta)
    }

    /// Number of rounds `K = max(ceil(ε^{-2β}), ceil(ln(1/ε)))`.
    pub fn rounds(&self) -> u64 {
        let power = ceil_tol(self.epsilon.powf(-2.0 * self.beta));
        let log = ceil_tol((1.0 / self.epsilon).ln());
        power.max(log).max(1.0) as u64
    }

    /// Depth horizon `ceil(ε^{-(1-β)})`. Only binds when the logarithmic
    /// round count dominates, i.e. for very small `β`.
    pub fn depth_cap(&self) -> u64 {
        ceil_tol(self.epsilon.powf(-(1.0 - self.beta))).max(1.0) as u64
    }
}

pub(crate) fn validate_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return invalid(format!("epsilon must lie in (0, 1), got {epsilon}"));
    }
    Ok(())
}

/// `ceil` that ignores floating noise just above an integer.
pub(crate) fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `floor` that ignores floating noise just below an integer.
pub(crate) fn floor_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.floor()
    }
}

pub fn power_law_depth(k: u64, exponent: f64) -> u64 {
    floor_tol((k as f64).powf(exponent)) as u64
}

/// Power-law schedule: `N_shot` shots at depth `min(floor(k^η), cap)` for
/// `k = 1..=K`.
pub fn power_law_schedule(p: &PowerLawParams) -> Result<Schedule> {
    p.validate()?;
    let rounds = p.rounds();
    if rounds > MAX_ROUNDS {
        return Err(Error::ScheduleTooLarge { rounds, limit: MAX_ROUNDS });
    }
    let eta = p.depth_exponent();
    let cap = p.depth_cap();
    let entries = (1..=rounds)
        .map(|k| ScheduleEntry { depth: power_law_depth(k, eta).min(cap), shots: p.n_shot })
        .collect();
    Ok(Schedule { entries })
}

/// Depth 0 followed by `1, 2, 4, …` up to the largest power of two `<= 1/ε`.
pub fn exponential_schedule(epsilon: f64, n_shot: u64) -> Result<Schedule> {
    validate_epsilon(epsilon)?;
    if n_shot == 0 {
        return invalid("n_shot must be >= 1");
    }
    let horizon = 1.0 / epsilon;
    let mut entries = vec![ScheduleEntry { depth: 0, shots: n_shot }];
    let mut d: u64 = 1;
    while (d as f64) <= horizon * (1.0 + 1e-12) {
        entries.push(ScheduleEntry { depth: d, shots: n_shot });
        d *= 2;
    }
    Ok(Schedule { entries })
}

/// Fisher information about `α = cos²θ`, with any regularizing depth
/// perturbations that were applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherInformation {
    pub value: f64,
    /// Indices of entries whose depth was bumped by +1 (possibly repeatedly)
    /// to escape a vanishing denominator.
    pub perturbed_entries: Vec<usize>,
}

/// Per-shot Fisher information about `α` of one circuit at `depth`.
/// `None` signals a vanishing denominator.
fn fisher_term(theta: f64, gamma: f64, depth: u64) -> Option<f64> {
    let w = (2 * depth + 1) as f64;
    let s2 = (2.0 * theta).sin().powi(2);
    let contraction = (-2.0 * gamma * depth as f64).exp();
    if contraction == 1.0 {
        // Noiseless: the ratio is identically 4, i.e. (2m+1)²/(α(1-α)).
        return Some(4.0 * w * w / s2);
    }
    let phase = 2.0 * w * theta;
    let denom = 1.0 - contraction * phase.cos().powi(2);
    if denom < FISHER_DENOMINATOR_FLOOR {
        return None;
    }
    Some(w * w * 4.0 * contraction * phase.sin().powi(2) / denom / s2)
}

/// `Σ_k N_k I_k(α)` with the depolarizing per-shot term
/// `(2m+1)² 4e^{-2γm} sin²(2(2m+1)θ) / ((1 - e^{-2γm} cos²(2(2m+1)θ)) sin²(2θ))`.
pub fn fisher_information(s: &Schedule, theta: f64, gamma: f64) -> Result<FisherInformation> {
    if !(theta > 0.0 && theta < FRAC_PI_2) {
        return invalid(format!("Fisher information needs theta in (0, pi/2), got {theta}"));
    }
    if !(gamma >= 0.0) {
        return invalid("gamma must be >= 0");
    }
    const MAX_BUMPS: u64 = 16;
    let mut value = 0.0;
    let mut perturbed = Vec::new();
    for (i, e) in s.entries.iter().enumerate() {
        let mut depth = e.depth;
        let term = loop {
            if let Some(t) = fisher_term(theta, gamma, depth) {
                break t;
            }
            if depth - e.depth >= MAX_BUMPS {
                return Err(Error::FisherDivergence { entry: i, depth: e.depth });
            }
            depth += 1;
        };
        if depth != e.depth {
            perturbed.push(i);
        }
        value += e.shots as f64 * term;
    }
    Ok(FisherInformation { value, perturbed_entries: perturbed })
}

/// Power-law exponent for target `ε` under noise `γ`: `0` (use the
/// exponential schedule) when `γ <= ε`, else `1 - ln γ / ln ε` clamped into
/// `[0.01, 1]`.
pub fn select_beta(epsilon: f64, gamma: f64) -> Result<f64> {
    validate_epsilon(epsilon)?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return invalid("gamma must be finite and >= 0");
    }
    if gamma <= epsilon {
        return Ok(0.0);
    }
    Ok((1.0 - gamma.ln() / epsilon.ln()).clamp(0.01, 1.0))
}

/// Unnormalized log-likelihood `Σ_k N_k0 ln p0(θ) + N_k1 ln p1(θ)` at each
/// grid angle. Zero-probability outcomes that were observed give `-∞`.
pub fn loglikelihood_surface(
    s: &Schedule,
    observed: &[MeasurementBatch],
    theta_grid: &[f64],
    gamma: f64,
) -> Result<Vec<f64>> {
    if observed.len() != s.len() {
        return Err(Error::ObservationMismatch(observed.len().min(s.len())));
    }
    for (i, (e, b)) in s.entries.iter().zip(observed).enumerate() {
        if e.depth != b.depth || e.shots != b.shots || b.basis != Basis::Standard {
            return Err(Error::ObservationMismatch(i));
        }
    }
    // Observations at equal depth combine additively.
    let mut counts: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
    for b in observed {
        let c = counts.entry(b.depth).or_insert((0, 0));
        c.0 += b.count_zero();
        c.1 += b.count_one;
    }
    Ok(theta_grid
        .iter()
        .map(|&theta| {
            counts
                .iter()
                .map(|(&depth, &(n0, n1))| {
                    let p1 = outcome_probability_with(theta, gamma, depth, Basis::Standard, false);
                    xlogy(n0, 1.0 - p1) + xlogy(n1, p1)
                })
                .sum()
        })
        .collect())
}

/// `n ln p` with `0 ln 0 = 0` and `n ln 0 = -∞` for `n > 0`.
pub(crate) fn xlogy(n: u64, p: f64) -> f64 {
    if n == 0 {
        0.0
    } else if p <= 0.0 {
        f64::NEG_INFINITY
    } else {
        n as f64 * p.ln()
    }
}
