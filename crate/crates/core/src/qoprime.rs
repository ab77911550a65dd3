//! QoPrime amplitude estimation.
//!
//! With `θ = πM/(2N)` and `N` a product of odd coprime moduli, a circuit of
//! depth `d_i = (N - N_i)/(2N_i)` sees the angle `πM/(2N_i)`, so each group
//! product `N_i` reveals `M mod N_i` at depth far below `1/ε`. Residues are
//! glued back with the Chinese remainder theorem.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error::{invalid, Error, Result};
use crate::numtheory::{coprimes_feasible, crt_reconstruct, find_coprimes, make_group_plan, CoprimeSet, GroupPlan};
use crate::oracle::{sample_batch, Basis, ProblemInstance};
use crate::report::{saturating_calls, Algorithm, EstimateReport};
use crate::rng::derive_seed;
use crate::schedules::validate_epsilon;

pub const DEFAULT_SAMPLE_CAP: f64 = 1e10;

/// Largest number of moduli considered by the optimizers.
pub const MAX_K: usize = 16;

/// Half-width of the confidence arc around each residue estimate.
const ARC: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleBudget {
    /// `100 c N_i² e^{2γd}` residue shots and `48 c e^{2γd}` parity shots.
    #[default]
    Chernoff,
    /// Smallest shot counts whose exact binomial tails meet `2e^{-c}`.
    ExactBinomial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QoPrimeParams {
    pub epsilon: f64,
    pub delta: f64,
    pub k: usize,
    pub q: usize,
    /// Noise rate assumed by the estimator for budgets and inversion.
    pub gamma: f64,
    pub budget: SampleBudget,
    /// Refuse plans whose worst-case oracle calls exceed this.
    pub sample_cap: f64,
}

impl QoPrimeParams {
    pub fn new(epsilon: f64, delta: f64, k: usize, q: usize, gamma: f64) -> Result<Self> {
        let p = Self { epsilon, delta, k, q, gamma, budget: SampleBudget::Chernoff, sample_cap: DEFAULT_SAMPLE_CAP };
        p.validate()?;
        Ok(p)
    }

    /// Parameters with `(k, q)` from [`optimize_params_realized`].
    pub fn optimized(epsilon: f64, delta: f64, gamma: f64) -> Result<Self> {
        let o = optimize_params_realized(epsilon, gamma, delta)?;
        Self::new(epsilon, delta, o.k, o.q, gamma)
    }

    pub fn with_budget(mut self, budget: SampleBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_sample_cap(mut self, cap: f64) -> Self {
        self.sample_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        validate_epsilon(self.epsilon)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if self.k < 2 {
            return invalid(format!("k must be >= 2, got {}", self.k));
        }
        if self.q < 1 || self.q >= self.k {
            return invalid(format!("q must lie in [1, k-1] = [1, {}], got {}", self.k - 1, self.q));
        }
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return invalid("gamma must be finite and >= 0");
        }
        if !(self.sample_cap > 0.0) {
            return invalid("sample cap must be positive");
        }
        Ok(())
    }

    pub fn num_groups(&self) -> usize {
        self.k.div_ceil(self.q)
    }

    /// Per-stage Chernoff exponent `c = ln(4 ceil(k/q) / δ)`.
    pub fn c(&self) -> f64 {
        (4.0 * self.num_groups() as f64 / self.delta).ln()
    }
}

/// Shot counts for one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupBudget {
    pub n_i: u128,
    pub depth: u64,
    pub standard_shots: u64,
    /// Always odd, so the parity majority is never tied.
    pub hadamard_shots: u64,
}

impl GroupBudget {
    /// Oracle calls if the shifted branch is needed.
    pub fn worst_case_calls(&self) -> f64 {
        (2.0 * self.standard_shots as f64 + self.hadamard_shots as f64) * (2 * self.depth + 1) as f64
    }
}

/// Coprimes, grouping and shot budgets, fixed before any sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoPrimePlan {
    pub params: QoPrimeParams,
    pub coprimes: CoprimeSet,
    pub groups: GroupPlan,
    pub c: f64,
    pub budgets: Vec<GroupBudget>,
}

impl QoPrimePlan {
    pub fn new(params: &QoPrimeParams) -> Result<Self> {
        params.validate()?;
        let coprimes = find_coprimes(params.epsilon, params.k)?;
        let groups = make_group_plan(&coprimes, params.q)?;
        let c = params.c();
        let mut budgets = Vec::with_capacity(groups.num_groups());
        let mut worst = 0.0;
        for i in 0..groups.num_groups() {
            let n_i = groups.group_products[i];
            let depth = groups.depth(i);
            let (std_f, had_f) = chernoff_shots(n_i as f64, depth, params.gamma, c);
            let calls = (2.0 * std_f + had_f) * (2 * depth + 1) as f64;
            worst += calls;
            if !worst.is_finite() || worst > params.sample_cap && params.budget == SampleBudget::Chernoff {
                return Err(Error::SampleBudgetExceeded { required: worst, cap: params.sample_cap });
            }
            let (standard_shots, hadamard_shots) = match params.budget {
                SampleBudget::Chernoff => (std_f as u64, odd(had_f as u64)),
                SampleBudget::ExactBinomial => (
                    exact_standard_shots(n_i as f64, depth, params.gamma, c, std_f as u64),
                    exact_hadamard_shots(n_i as f64, depth, params.gamma, c, odd(had_f as u64)),
                ),
            };
            budgets.push(GroupBudget { n_i, depth, standard_shots, hadamard_shots });
        }
        let worst: f64 = budgets.iter().map(GroupBudget::worst_case_calls).sum();
        if worst > params.sample_cap {
            return Err(Error::SampleBudgetExceeded { required: worst, cap: params.sample_cap });
        }
        Ok(Self { params: *params, coprimes, groups, c, budgets })
    }

    pub fn product(&self) -> u128 {
        self.groups.product
    }

    pub fn max_depth(&self) -> u64 {
        self.groups.max_depth()
    }

    pub fn worst_case_calls(&self) -> f64 {
        self.budgets.iter().map(GroupBudget::worst_case_calls).sum()
    }
}

fn odd(n: u64) -> u64 {
    if n % 2 == 0 {
        n + 1
    } else {
        n
    }
}

/// `(ceil(100 c N_i² e^{2γd}), ceil(48 c e^{2γd}))`.
fn chernoff_shots(n_i: f64, depth: u64, gamma: f64, c: f64) -> (f64, f64) {
    let amp = (2.0 * gamma * depth as f64).exp();
    ((100.0 * c * n_i * n_i * amp).ceil(), (48.0 * c * amp).ceil())
}

/// `Pr[X < lo] + Pr[X > hi]` for `X ~ Bin(n, p)`.
fn binomial_outside(n: u64, p: f64, lo: u64, hi: u64) -> f64 {
    if p <= 0.0 {
        return if lo > 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if hi < n { 1.0 } else { 0.0 };
    }
    let b = Binomial::new(p, n).expect("valid binomial");
    let below = if lo == 0 { 0.0 } else { b.cdf(lo - 1) };
    let above = if hi >= n { 0.0 } else { b.sf(hi) };
    below + above
}

/// Worst-case probability over residues `l` that `l̂` misses `l` by more
/// than `0.25`, given `m` residue shots.
fn residue_miss_probability(n_i: f64, depth: u64, gamma: f64, m: u64) -> f64 {
    let contraction = (-gamma * depth as f64).exp();
    let p0 = |l: f64| 0.5 + 0.5 * contraction * (PI * l / n_i).cos();
    let lo_l = (n_i / 6.0 - ARC).max(0.0);
    let hi_l = (5.0 * n_i / 6.0 + ARC).min(n_i);
    const POINTS: usize = 48;
    let mut worst: f64 = 0.0;
    for j in 0..=POINTS {
        let l = lo_l + (hi_l - lo_l) * j as f64 / POINTS as f64;
        // p0 decreases in l, so the acceptance window in p̂0 is
        // [p0(l + 1/4), p0(l - 1/4)].
        let upper = if l - ARC <= 0.0 { 1.0 } else { p0(l - ARC) };
        let lower = if l + ARC >= n_i { 0.0 } else { p0(l + ARC) };
        let lo = (m as f64 * lower).ceil() as u64;
        let hi = ((m as f64 * upper).floor() as u64).min(m);
        worst = worst.max(binomial_outside(m, p0(l), lo, hi));
    }
    worst
}

fn parity_miss_probability(n_i: f64, depth: u64, gamma: f64, h: u64) -> f64 {
    let contraction = (-gamma * depth as f64).exp();
    let l_edge = (n_i / 6.0 - ARC).max(0.0);
    let phi = PI * l_edge / (2.0 * n_i);
    let p_major = 0.5 + 0.5 * contraction * (2.0 * phi).sin();
    binomial_outside(h, p_major, h / 2 + 1, h)
}

/// Smallest `m` (by bisection below the Chernoff count) meeting the tail.
fn exact_standard_shots(n_i: f64, depth: u64, gamma: f64, c: f64, chernoff: u64) -> u64 {
    let limit = 2.0 * (-c).exp();
    let ok = |m: u64| residue_miss_probability(n_i, depth, gamma, m) <= limit;
    bisect(1, chernoff, ok)
}

fn exact_hadamard_shots(n_i: f64, depth: u64, gamma: f64, c: f64, chernoff: u64) -> u64 {
    let limit = 2.0 * (-c).exp();
    let ok = |h: u64| parity_miss_probability(n_i, depth, gamma, odd(h)) <= limit;
    odd(bisect(1, chernoff, ok))
}

/// Smallest `x` in `[lo, hi]` with `ok(x)`, assuming monotonicity; `hi` when
/// nothing passes.
fn bisect(mut lo: u64, mut hi: u64, ok: impl Fn(u64) -> bool) -> u64 {
    if !ok(hi) {
        return hi;
    }
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Direct,
    Shifted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupEstimate {
    pub index: usize,
    pub n_i: u128,
    pub depth: u64,
    pub branch: Branch,
    /// Folded residue estimate from the unshifted state.
    pub l_hat_direct: f64,
    /// The folded estimate that produced `m_bar`.
    pub l_hat: f64,
    pub parity: u8,
    /// Estimate of `M mod N_i`, in `[0, N_i)`.
    pub m_bar: f64,
    /// Estimate of `M mod 2N_i`, used to resolve `M` near `0` versus `N`.
    pub residue_2n: f64,
    pub samples_used: u64,
    pub oracle_calls: u64,
}

fn fmod(x: f64, n: f64) -> f64 {
    let r = x.rem_euclid(n);
    if r >= n {
        r - n
    } else {
        r
    }
}

fn circular_distance(a: f64, b: f64, n: f64) -> f64 {
    let d = fmod(a - b, n);
    d.min(n - d)
}

/// `(l̂, shots)`: folded residue in `[0, N_i]` from `m` standard shots.
fn residue_stage(
    inst: &ProblemInstance,
    n_i: f64,
    depth: u64,
    shifted: bool,
    m: u64,
    gamma: f64,
    seed: u64,
) -> Result<f64> {
    let b = sample_batch(inst, depth, Basis::Standard, shifted, m, seed)?;
    let p0 = b.count_zero() as f64 / m as f64;
    let x = ((gamma * depth as f64).exp() * (2.0 * p0 - 1.0)).clamp(-1.0, 1.0);
    Ok(n_i / PI * x.acos())
}

/// Parity of `floor(M / N_i)`: odd exactly when "+" is the majority.
fn parity_stage(inst: &ProblemInstance, depth: u64, shifted: bool, h: u64, seed: u64) -> Result<u8> {
    let b = sample_batch(inst, depth, Basis::Hadamard, shifted, h, seed)?;
    Ok(u8::from(2 * b.count_one < h))
}

/// Estimate `M mod N_i` for one group using a precomputed budget.
pub fn estimate_group_with_budget(
    inst: &ProblemInstance,
    index: usize,
    budget: &GroupBudget,
    n: u128,
    gamma: f64,
    rng_seed: u64,
) -> Result<GroupEstimate> {
    let GroupBudget { n_i, depth, standard_shots: m, hadamard_shots: h } = *budget;
    if n_i == 0 || n % n_i != 0 || (n / n_i) % 2 == 0 {
        return invalid(format!("group product {n_i} must divide {n} with odd quotient"));
    }
    let nf = n_i as f64;
    let seed = |s: u64| derive_seed(rng_seed, s);
    let l_direct = residue_stage(inst, nf, depth, false, m, gamma, seed(0))?;
    let in_band = (nf / 6.0..=5.0 * nf / 6.0).contains(&l_direct);
    let (branch, l_hat, parity, m_bar, residue_2n, samples) = if in_band {
        let t = parity_stage(inst, depth, false, h, seed(1))?;
        let m_bar = if t == 1 { fmod(-l_direct, nf) } else { fmod(l_direct, nf) };
        let r2 = fmod(t as f64 * nf + m_bar, 2.0 * nf);
        (Branch::Direct, l_direct, t, m_bar, r2, m + h)
    } else {
        let l1 = residue_stage(inst, nf, depth, true, m, gamma, seed(2))?;
        let t = parity_stage(inst, depth, true, h, seed(3))?;
        let signed = if t == 1 { fmod(-l1, nf) } else { fmod(l1, nf) };
        let half_n_mod = (n % (2 * n_i)) as f64 / 2.0;
        let m_bar = fmod(signed + half_n_mod, nf);
        let half_n_mod_2 = (n % (4 * n_i)) as f64 / 2.0;
        let r2 = fmod(t as f64 * nf + signed + half_n_mod_2, 2.0 * nf);
        (Branch::Shifted, l1, t, m_bar, r2, 2 * m + h)
    };
    let calls = samples as u128 * (2 * depth as u128 + 1);
    Ok(GroupEstimate {
        index,
        n_i,
        depth,
        branch,
        l_hat_direct: l_direct,
        l_hat,
        parity,
        m_bar,
        residue_2n,
        samples_used: samples,
        oracle_calls: saturating_calls(calls),
    })
}

/// Estimate `M mod N_i` with Chernoff shot counts and exponent `c`, using
/// the instance's noise rate for inversion.
pub fn estimate_group(inst: &ProblemInstance, n_i: u128, n: u128, c: f64, rng_seed: u64) -> Result<GroupEstimate> {
    if n_i == 0 || n % n_i != 0 || (n / n_i) % 2 == 0 {
        return invalid(format!("group product {n_i} must divide {n} with odd quotient"));
    }
    if !(c > 0.0) {
        return invalid("c must be positive");
    }
    let depth = ((n - n_i) / (2 * n_i)) as u64;
    let (m, h) = chernoff_shots(n_i as f64, depth, inst.gamma(), c);
    let budget = GroupBudget { n_i, depth, standard_shots: m as u64, hadamard_shots: odd(h as u64) };
    estimate_group_with_budget(inst, 0, &budget, n, inst.gamma(), rng_seed)
}

/// Intervals (relative coordinates) of points covered by arc `[-w, w]`
/// around `o` on the unit circle, clipped to `[-w, w]`.
fn clip_arc(o: f64, w: f64) -> Vec<(f64, f64)> {
    [-1.0, 0.0, 1.0]
        .iter()
        .filter_map(|shift| {
            let (a, b) = ((o + shift - w).max(-w), (o + shift + w).min(w));
            (a <= b).then_some((a, b))
        })
        .collect()
}

fn intersect(xs: &[(f64, f64)], ys: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a, b) in xs {
        for &(c, d) in ys {
            let (lo, hi) = (a.max(c), b.min(d));
            if lo <= hi {
                out.push((lo, hi));
            }
        }
    }
    out
}

/// Signed offset of `x` from `y` on the unit circle, in `[-1/2, 1/2)`.
fn wrap_offset(x: f64, y: f64) -> f64 {
    (x - y + 0.5).rem_euclid(1.0) - 0.5
}

/// Common fractional part `α` of all residue estimates and the integer
/// residues `M_i` with `M̄_i + β_i = M_i + α`, `|β_i| <= 1/4`.
pub fn align_fractions(estimates: &[GroupEstimate]) -> Result<(f64, Vec<u128>)> {
    if estimates.is_empty() {
        return invalid("alignment needs at least one group estimate");
    }
    let fracs: Vec<f64> = estimates.iter().map(|e| e.m_bar.rem_euclid(1.0)).collect();
    let f0 = fracs[0];
    let mut region = vec![(-ARC, ARC)];
    for &f in &fracs[1..] {
        region = intersect(&region, &clip_arc(wrap_offset(f, f0), ARC));
        if region.is_empty() {
            return Err(Error::EmptyIntersection);
        }
    }
    let &(a, b) = region
        .iter()
        .max_by(|x, y| (x.1 - x.0).total_cmp(&(y.1 - y.0)))
        .expect("nonempty region");
    let alpha = (f0 + 0.5 * (a + b)).rem_euclid(1.0);
    let alpha = if alpha > 1.0 - 1e-9 { 0.0 } else { alpha };
    let residues = estimates
        .iter()
        .zip(&fracs)
        .map(|(e, &f)| {
            let beta = wrap_offset(alpha, f);
            let m = (e.m_bar + beta - alpha).round();
            (m as i128).rem_euclid(e.n_i as i128) as u128
        })
        .collect();
    Ok((alpha, residues))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QoPrimeDiagnostics {
    pub k: usize,
    pub q: usize,
    pub moduli: Vec<u64>,
    pub group_products: Vec<u128>,
    pub product: u128,
    pub c: f64,
    pub budget: SampleBudget,
    pub alpha: f64,
    /// CRT reconstruction of the integer residues.
    pub m_crt: u128,
    /// Final lattice coordinate `v` with `θ̂ = πv/(2N)` before clamping.
    pub m_hat: f64,
    pub groups: Vec<GroupEstimate>,
}

/// Run the full pipeline for a fixed plan.
pub fn estimate_qoprime_with_plan(inst: &ProblemInstance, plan: &QoPrimePlan, rng_seed: u64) -> Result<EstimateReport> {
    let start = Instant::now();
    let n = plan.product();
    let gamma = plan.params.gamma;
    let estimates = plan
        .budgets
        .iter()
        .enumerate()
        .map(|(i, b)| estimate_group_with_budget(inst, i, b, n, gamma, derive_seed(rng_seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let (alpha, residues) = align_fractions(&estimates)?;
    let pairs: Vec<(u128, u128)> = residues.iter().zip(&estimates).map(|(&r, e)| (r, e.n_i)).collect();
    let m_crt = crt_reconstruct(&pairs)?;
    let m_hat = resolve_wrap(m_crt as f64 + alpha, n as f64, &estimates);
    let theta_hat = (PI * m_hat / (2.0 * n as f64)).clamp(0.0, FRAC_PI_2);

    let calls: u128 = estimates.iter().map(|e| e.oracle_calls as u128).sum();
    let mut r = EstimateReport::new(Algorithm::QoPrime, plan.params.epsilon, inst.gamma(), theta_hat);
    r.oracle_calls = saturating_calls(calls);
    r.max_depth = estimates.iter().map(|e| e.depth).max().unwrap_or(0);
    r.diagnostics.qoprime = Some(QoPrimeDiagnostics {
        k: plan.params.k,
        q: plan.params.q,
        moduli: plan.coprimes.moduli().to_vec(),
        group_products: plan.groups.group_products.clone(),
        product: n,
        c: plan.c,
        budget: plan.params.budget,
        alpha,
        m_crt,
        m_hat,
        groups: estimates,
    });
    r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(r)
}

/// The residues fix `M` only modulo `N`, but `M ∈ [0, N]`; the per-group
/// residues modulo `2N_i` pick between `M̂` and `M̂ + N` modulo `2N`.
fn resolve_wrap(m_hat: f64, n: f64, estimates: &[GroupEstimate]) -> f64 {
    let score = |w: f64| -> f64 {
        estimates
            .iter()
            .map(|e| {
                let two = 2.0 * e.n_i as f64;
                circular_distance(fmod(w, two), e.residue_2n, two)
            })
            .sum()
    };
    let (w0, w1) = (m_hat, m_hat + n);
    let w = if score(w1) < score(w0) { w1 } else { w0 };
    let w = fmod(w, 2.0 * n);
    if w > n + 1.5 {
        w - 2.0 * n
    } else {
        w
    }
}

pub fn estimate_qoprime(inst: &ProblemInstance, params: &QoPrimeParams, rng_seed: u64) -> Result<EstimateReport> {
    let plan = QoPrimePlan::new(params)?;
    estimate_qoprime_with_plan(inst, &plan, rng_seed)
}

/// Outcome of a `(k, q)` search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizedParams {
    pub k: usize,
    pub q: usize,
    /// Predicted oracle calls, up to the constant prefactor.
    pub predicted_calls: f64,
    pub predicted_depth: f64,
}

/// `ceil(k/q) · ε^{-(1+q/k)} · e^{2γ(π/ε)^{1-q/k}} · ln(4 ceil(k/q)/δ)`.
pub fn prefactor_expression(k: usize, q: usize, epsilon: f64, gamma: f64, delta: f64) -> f64 {
    log_prefactor_expression(k, q, epsilon, gamma, delta).exp()
}

fn log_prefactor_expression(k: usize, q: usize, epsilon: f64, gamma: f64, delta: f64) -> f64 {
    let groups = k.div_ceil(q) as f64;
    let r = q as f64 / k as f64;
    groups.ln() - (1.0 + r) * epsilon.ln()
        + 2.0 * gamma * (PI / epsilon).powf(1.0 - r)
        + (4.0 * groups / delta).ln().ln()
}

fn validate_search(epsilon: f64, gamma: f64, delta: f64) -> Result<()> {
    validate_epsilon(epsilon)?;
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return invalid("gamma must be finite and >= 0");
    }
    Ok(())
}

fn better(cand: (f64, f64), best: Option<(f64, f64)>) -> bool {
    match best {
        None => true,
        Some((cost, depth)) => cand.0 < cost || (cand.0 == cost && cand.1 < depth),
    }
}

/// Minimize the closed-form cost over `2 <= k <= 16`, `1 <= q < k`, among
/// feasible `k`. Ties go to the shallower circuit.
pub fn optimize_params(epsilon: f64, gamma: f64, delta: f64) -> Result<OptimizedParams> {
    validate_search(epsilon, gamma, delta)?;
    let mut best: Option<(OptimizedParams, (f64, f64))> = None;
    for k in 2..=MAX_K {
        if !coprimes_feasible(epsilon, k) {
            continue;
        }
        for q in 1..k {
            let cost = log_prefactor_expression(k, q, epsilon, gamma, delta);
            let depth = 0.5 * (PI / epsilon).powf(1.0 - q as f64 / k as f64);
            if better((cost, depth), best.map(|b| b.1)) {
                let o = OptimizedParams { k, q, predicted_calls: cost.exp(), predicted_depth: depth };
                best = Some((o, (cost, depth)));
            }
        }
    }
    Ok(best.expect("k = 2 is always feasible").0)
}

/// Minimize the plan's actual cost `c · Σ_i N · N_i · e^{2γ d_i}` over the
/// moduli that [`find_coprimes`] returns, so that coarse coprime products
/// far above `π/ε` are priced in.
pub fn optimize_params_realized(epsilon: f64, gamma: f64, delta: f64) -> Result<OptimizedParams> {
    optimize_params_constrained(epsilon, gamma, delta, None, None)
}

/// [`optimize_params_realized`] with `k` and/or `q` pinned.
pub fn optimize_params_constrained(
    epsilon: f64,
    gamma: f64,
    delta: f64,
    k: Option<usize>,
    q: Option<usize>,
) -> Result<OptimizedParams> {
    validate_search(epsilon, gamma, delta)?;
    if let (Some(k), Some(q)) = (k, q) {
        if q < 1 || q >= k {
            return invalid(format!("q must lie in [1, k-1] = [1, {}], got {q}", k.saturating_sub(1)));
        }
    }
    let ks: Vec<usize> = match k {
        Some(k) if k < 2 => return invalid(format!("k must be >= 2, got {k}")),
        Some(k) => vec![k],
        None => (2..=MAX_K).filter(|&k| coprimes_feasible(epsilon, k)).collect(),
    };
    let mut best: Option<(OptimizedParams, (f64, f64))> = None;
    for k in ks {
        let cs = find_coprimes(epsilon, k)?;
        let n = cs.product() as f64;
        let qs: Vec<usize> = match q {
            Some(q) => vec![q].into_iter().filter(|&q| q >= 1 && q < k).collect(),
            None => (1..k).collect(),
        };
        for q in qs {
            let plan = make_group_plan(&cs, q)?;
            let c = (4.0 * plan.num_groups() as f64 / delta).ln();
            let terms: Vec<f64> = (0..plan.num_groups())
                .map(|i| (n * plan.group_products[i] as f64).ln() + 2.0 * gamma * plan.depth(i) as f64)
                .collect();
            let max = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let cost = c.ln() + max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
            let depth = plan.max_depth() as f64;
            if better((cost, depth), best.map(|b| b.1)) {
                let o = OptimizedParams { k, q, predicted_calls: cost.exp(), predicted_depth: depth };
                best = Some((o, (cost, depth)));
            }
        }
    }
    best.map(|b| b.0).ok_or_else(|| Error::InvalidArgument(format!("no feasible (k, q) with q = {q:?}")))
}

/// Optimal closed-form cost at each precision.
pub fn budget_envelope(epsilons: &[f64], gamma: f64, delta: f64) -> Result<Vec<(f64, OptimizedParams)>> {
    epsilons.iter().map(|&e| optimize_params(e, gamma, delta).map(|o| (e, o))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn est(n_i: u128, m_bar: f64) -> GroupEstimate {
        GroupEstimate {
            index: 0,
            n_i,
            depth: 0,
            branch: Branch::Direct,
            l_hat_direct: m_bar,
            l_hat: m_bar,
            parity: 0,
            m_bar,
            residue_2n: m_bar,
            samples_used: 0,
            oracle_calls: 0,
        }
    }

    #[test]
    fn chernoff_exponent_and_counts() {
        let p = QoPrimeParams::new(1e-3, 1e-3, 3, 1, 0.0).unwrap();
        assert_relative_eq!(p.c(), (12_000.0f64).ln(), epsilon = 1e-12);
        let (m, h) = chernoff_shots(5.0, 10, 0.0, 2.0);
        assert_eq!((m, h), (5000.0, 96.0));
        let (m, _) = chernoff_shots(5.0, 10, 0.01, 2.0);
        assert_eq!(m, (5000.0 * 0.2f64.exp()).ceil());
    }

    #[test]
    fn params_validation() {
        assert!(QoPrimeParams::new(1e-3, 1e-3, 3, 3, 0.0).is_err());
        assert!(QoPrimeParams::new(1e-3, 1e-3, 3, 0, 0.0).is_err());
        assert!(QoPrimeParams::new(1e-3, 1e-3, 1, 1, 0.0).is_err());
        assert!(QoPrimeParams::new(1e-3, 0.0, 3, 1, 0.0).is_err());
        assert!(QoPrimeParams::new(1e-3, 1e-3, 3, 1, -1.0).is_err());
    }

    #[test]
    fn residue_at_half_modulus_takes_direct_branch() {
        // N = 105, N_i = 15, M = 7.5 + 15·2 so that M mod 15 = 7.5 = N_i/2.
        let m = 37.5;
        let theta = PI * m / 210.0;
        let inst = ProblemInstance::noiseless(theta).unwrap();
        let g = estimate_group(&inst, 15, 105, 12.0, 9).unwrap();
        assert_eq!(g.branch, Branch::Direct);
        assert!(circular_distance(g.m_bar, 7.5, 15.0) <= 0.25);
        assert!(circular_distance(g.residue_2n, 37.5 % 30.0, 30.0) <= 0.25);
    }

    #[test]
    fn zero_angle_group_is_shifted() {
        let inst = ProblemInstance::noiseless(0.0).unwrap();
        let g = estimate_group(&inst, 15, 105, 10.0, 1).unwrap();
        assert_eq!(g.l_hat_direct, 0.0);
        assert_eq!(g.branch, Branch::Shifted);
        assert!(circular_distance(g.m_bar, 0.0, 15.0) <= 0.25);
        assert!(circular_distance(g.residue_2n, 0.0, 30.0) <= 0.25);
    }

    #[test]
    fn lattice_residue_never_fails_over_500_trials() {
        let theta = PI * 53.0 / 210.0;
        let inst = ProblemInstance::noiseless(theta).unwrap();
        for s in 0..500 {
            let g = estimate_group(&inst, 15, 105, 10.0, s).unwrap();
            assert!(circular_distance(g.m_bar, 8.0, 15.0) <= 0.25, "seed {s}: {g:?}");
        }
    }

    #[test]
    fn estimate_group_rejects_bad_moduli() {
        let inst = ProblemInstance::noiseless(0.3).unwrap();
        assert!(estimate_group(&inst, 2, 105, 5.0, 0).is_err());
        assert!(estimate_group(&inst, 15, 30, 5.0, 0).is_err());
    }

    #[test]
    fn align_identical_fractions() {
        let (alpha, m) = align_fractions(&[est(3, 1.5), est(5, 4.5), est(7, 0.5)]).unwrap();
        assert_relative_eq!(alpha, 0.5, epsilon = 1e-12);
        assert_eq!(m, vec![1, 4, 0]);
    }

    #[test]
    fn align_wraparound() {
        let (alpha, m) = align_fractions(&[est(5, 2.9), est(7, 4.1)]).unwrap();
        assert!(alpha < 1e-9 || alpha > 1.0 - 1e-9, "alpha = {alpha}");
        assert_eq!(m, vec![3, 4]);
    }

    #[test]
    fn align_disjoint_arcs_fail() {
        // Two quarter-width arcs always meet on the circle ({0.2, 0.8} share
        // [0.95, 0.05]); three spread arcs need not.
        assert!(align_fractions(&[est(5, 1.2), est(7, 2.8)]).is_ok());
        let spread = [est(5, 1.0), est(7, 2.34), est(11, 3.67)];
        assert_eq!(align_fractions(&spread), Err(Error::EmptyIntersection));
        assert!(align_fractions(&[]).is_err());
    }

    #[test]
    fn zero_and_right_angle_endpoints() {
        let p = QoPrimeParams::new(1e-3, 1e-3, 3, 1, 0.0).unwrap();
        let r = estimate_qoprime(&ProblemInstance::noiseless(0.0).unwrap(), &p, 4).unwrap();
        assert!(r.theta_hat <= 1e-3);
        let r = estimate_qoprime(&ProblemInstance::noiseless(FRAC_PI_2).unwrap(), &p, 4).unwrap();
        assert!((r.theta_hat - FRAC_PI_2).abs() <= 1e-3);
    }

    #[test]
    fn report_accounts_calls() {
        let p = QoPrimeParams::new(1e-3, 1e-3, 3, 1, 0.0).unwrap();
        let r = estimate_qoprime(&ProblemInstance::noiseless(0.8).unwrap(), &p, 2).unwrap();
        let d = r.diagnostics.qoprime.as_ref().unwrap();
        let sum: u64 = d.groups.iter().map(|g| g.samples_used * (2 * g.depth + 1)).sum();
        assert_eq!(r.oracle_calls, sum);
        assert_eq!(r.max_depth, d.groups.iter().map(|g| g.depth).max().unwrap());
        assert!((r.theta_hat - 0.8).abs() <= 1e-3);
    }

    #[test]
    fn sample_cap_is_enforced() {
        let p = QoPrimeParams::new(1e-4, 1e-3, 2, 1, 0.0).unwrap().with_sample_cap(1e6);
        assert!(matches!(QoPrimePlan::new(&p), Err(Error::SampleBudgetExceeded { .. })));
    }

    #[test]
    fn exact_budget_is_smaller_but_still_covers_tail() {
        let base = QoPrimeParams::new(1e-3, 1e-3, 3, 1, 0.0).unwrap();
        let cher = QoPrimePlan::new(&base).unwrap();
        let exact = QoPrimePlan::new(&base.with_budget(SampleBudget::ExactBinomial)).unwrap();
        for (a, b) in cher.budgets.iter().zip(&exact.budgets) {
            assert!(b.standard_shots < a.standard_shots);
            assert!(b.hadamard_shots <= a.hadamard_shots);
            assert_eq!(b.hadamard_shots % 2, 1);
            let limit = 2.0 * (-cher.c).exp();
            assert!(residue_miss_probability(b.n_i as f64, b.depth, 0.0, b.standard_shots) <= limit);
            assert!(parity_miss_probability(b.n_i as f64, b.depth, 0.0, b.hadamard_shots) <= limit);
        }
    }

    #[test]
    fn optimizer_noiseless_prefers_q_one() {
        let o = optimize_params(1e-4, 0.0, 1e-5).unwrap();
        assert_eq!(o.q, 1);
        assert!((7..=11).contains(&o.k), "k = {}", o.k);
    }

    #[test]
    fn optimizer_noisy_prefers_shallowest() {
        let o = optimize_params(1e-6, 1e-2, 1e-5).unwrap();
        assert_eq!(o.q, o.k - 1);
    }

    #[test]
    fn optimizer_coarse_precision_uses_two_moduli() {
        let o = optimize_params(0.5, 0.0, 1e-3).unwrap();
        assert_eq!((o.k, o.q), (2, 1));
        let o = optimize_params_realized(0.5, 0.0, 1e-3).unwrap();
        assert_eq!((o.k, o.q), (2, 1));
    }

    #[test]
    fn prefactor_expression_value() {
        // ceil(3/1) · (1e-3)^{-4/3} · ln(12 / 1e-3)
        let v = prefactor_expression(3, 1, 1e-3, 0.0, 1e-3);
        assert_relative_eq!(v, 3.0 * 1e4 * (12_000.0f64).ln(), max_relative = 1e-10);
    }
}
