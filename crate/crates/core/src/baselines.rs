//! Reference estimators: classical sampling at depth 0 and maximum
//! likelihood over the exponential schedule.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::oracle::{sample_batch, Basis, ProblemInstance};
use crate::powerlaw::estimate_powerlaw;
use crate::report::{Algorithm, EstimateReport};
use crate::rng::derive_seed;
use crate::schedules::{validate_epsilon, PowerLawParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    ClassicalMC,
    ExponentialMle,
}

/// Probability tolerance of the crude first stage.
fn crude_tolerance() -> f64 {
    (PI / 16.0).sin().powi(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDiagnostics {
    pub crude_shots: u64,
    pub theta_crude: f64,
    pub basis: Basis,
    /// Smallest `|dp/dθ|` over the angles consistent with the crude stage.
    pub min_slope: f64,
    pub shots: u64,
    pub p_hat: f64,
}

fn hoeffding_shots(tolerance: f64, failure: f64) -> u64 {
    ((2.0 / failure).ln() / (2.0 * tolerance * tolerance)).ceil() as u64
}

fn theta_from_standard(p: f64) -> f64 {
    p.clamp(0.0, 1.0).sqrt().asin()
}

/// Depth-0 estimation in two stages. A crude estimate picks the measurement
/// basis whose response is steep around the angle (standard in
/// `[π/8, 3π/8]`, Hadamard otherwise) and fixes the Hoeffding budget for the
/// refined stage. Each stage fails with probability at most `δ/2`.
pub fn estimate_classical(inst: &ProblemInstance, epsilon: f64, delta: f64, rng_seed: u64) -> Result<EstimateReport> {
    validate_epsilon(epsilon)?;
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0, 1), got {delta}"));
    }
    let start = Instant::now();
    let t = crude_tolerance();
    let crude_shots = hoeffding_shots(t, delta / 2.0);
    let crude = sample_batch(inst, 0, Basis::Standard, false, crude_shots, derive_seed(rng_seed, 0))?;
    let p_crude = crude.count_one as f64 / crude_shots as f64;
    let theta_crude = theta_from_standard(p_crude);
    let lo = theta_from_standard(p_crude - t);
    let hi = theta_from_standard(p_crude + t);

    let standard = (PI / 8.0..=3.0 * PI / 8.0).contains(&theta_crude);
    let (basis, slope) = if standard {
        (Basis::Standard, (2.0 * lo).sin().min((2.0 * hi).sin()))
    } else if theta_crude < FRAC_PI_4 {
        (Basis::Hadamard, (2.0 * hi).cos())
    } else {
        (Basis::Hadamard, -(2.0 * lo).cos())
    };
    let shots = hoeffding_shots(epsilon * slope, delta / 2.0);
    let batch = sample_batch(inst, 0, basis, false, shots, derive_seed(rng_seed, 1))?;
    let p_hat = batch.count_one as f64 / shots as f64;
    let theta_hat = match basis {
        Basis::Standard => theta_from_standard(p_hat),
        // p₋ = sin²(θ + π/4) is symmetric about π/4; the crude stage picks
        // the side.
        Basis::Hadamard => {
            let a = theta_from_standard(p_hat.max(0.5));
            if theta_crude < FRAC_PI_4 {
                a - FRAC_PI_4
            } else {
                3.0 * FRAC_PI_4 - a
            }
        }
    }
    .clamp(0.0, FRAC_PI_2);

    let mut r = EstimateReport::new(Algorithm::Classical, epsilon, inst.gamma(), theta_hat);
    r.oracle_calls = crude_shots + shots;
    r.max_depth = 0;
    r.diagnostics.classical =
        Some(ClassicalDiagnostics { crude_shots, theta_crude, basis, min_slope: slope, shots, p_hat });
    r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(r)
}

/// Maximum likelihood over depths `0, 1, 2, 4, …, ≤ 1/ε` with `n_shot` shots
/// each. Flags saturation once `γ · max_depth >= 1`.
pub fn estimate_exponential_mle(
    inst: &ProblemInstance,
    epsilon: f64,
    n_shot: u64,
    noise_aware: bool,
    rng_seed: u64,
) -> Result<EstimateReport> {
    let params = PowerLawParams { beta: 0.0, epsilon, n_shot };
    let mut r = estimate_powerlaw(inst, &params, noise_aware, rng_seed)?;
    r.diagnostics.beta = None;
    r.diagnostics.saturated = Some(inst.gamma() * r.max_depth as f64 >= 1.0);
    Ok(r)
}
