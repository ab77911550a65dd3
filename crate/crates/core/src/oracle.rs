//! Analytic model of the amplitude-estimation oracle.
//!
//! A circuit with `k` sequential Grover-type iterations prepares
//! `cos((2k+1)θ)|x,0⟩ + sin((2k+1)θ)|x',1⟩`. Measuring the flag qubit is a
//! Bernoulli trial; depolarizing noise at rate `γ` per call contracts the
//! oscillation toward 1/2 by `e^{-γk}`. All probabilities returned here refer
//! to outcome "1" (standard basis) or "−" (Hadamard basis).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::rng_from_seed;

/// Hidden angle and per-call depolarizing rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    theta: f64,
    gamma: f64,
}

impl ProblemInstance {
    pub fn new(theta: f64, gamma: f64) -> Result<Self> {
        if !theta.is_finite() || !(0.0..=FRAC_PI_2).contains(&theta) {
            return invalid(format!("theta must lie in [0, pi/2], got {theta}"));
        }
        if !gamma.is_finite() || gamma < 0.0 {
            return invalid(format!("gamma must be >= 0, got {gamma}"));
        }
        Ok(Self { theta, gamma })
    }

    pub fn noiseless(theta: f64) -> Result<Self> {
        Self::new(theta, 0.0)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Standard,
    Hadamard,
}

/// Tally of one batch of identical circuits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementBatch {
    pub depth: u64,
    pub basis: Basis,
    pub shots: u64,
    /// Count of outcome "1" (standard) or "−" (Hadamard).
    pub count_one: u64,
}

impl MeasurementBatch {
    pub fn count_zero(&self) -> u64 {
        self.shots - self.count_one
    }

    /// Oracle invocations consumed: each depth-`k` circuit costs `2k+1`.
    pub fn oracle_calls(&self) -> u128 {
        self.shots as u128 * calls_per_circuit(self.depth)
    }
}

pub fn calls_per_circuit(depth: u64) -> u128 {
    2 * depth as u128 + 1
}

/// Probability of outcome "1" in the given basis, using the explicit noise
/// rate `gamma` (which may differ from the instance's when an estimator
/// models the channel on its own terms).
pub fn outcome_probability_with(theta: f64, gamma: f64, depth: u64, basis: Basis, shifted: bool) -> f64 {
    let theta_eff = if shifted { theta - FRAC_PI_4 } else { theta };
    let phase = (2 * depth + 1) as f64 * theta_eff;
    let damping = if gamma == 0.0 { 1.0 } else { (-gamma * depth as f64).exp() };
    let p = match basis {
        Basis::Standard => {
            if damping == 1.0 {
                // sin² form is exact at the endpoints where the cosine form
                // loses a few ulps.
                phase.sin().powi(2)
            } else {
                0.5 - 0.5 * damping * (2.0 * phase).cos()
            }
        }
        Basis::Hadamard => {
            if damping == 1.0 {
                (phase + FRAC_PI_4).sin().powi(2)
            } else {
                0.5 - 0.5 * damping * (2.0 * (phase + FRAC_PI_4)).cos()
            }
        }
    };
    p.clamp(0.0, 1.0)
}

pub fn outcome_probability(inst: &ProblemInstance, depth: u64, basis: Basis, shifted: bool) -> f64 {
    outcome_probability_with(inst.theta, inst.gamma, depth, basis, shifted)
}

/// Draw `shots` circuits and tally outcome "1". Deterministic in `rng_seed`.
pub fn sample_batch(
    inst: &ProblemInstance,
    depth: u64,
    basis: Basis,
    shifted: bool,
    shots: u64,
    rng_seed: u64,
) -> Result<MeasurementBatch> {
    if shots == 0 {
        return invalid("shots must be >= 1");
    }
    let p = outcome_probability(inst, depth, basis, shifted);
    let count_one = draw_binomial(shots, p, rng_seed);
    Ok(MeasurementBatch { depth, basis, shots, count_one })
}

pub(crate) fn draw_binomial(n: u64, p: f64, seed: u64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let mut rng = rng_from_seed(seed);
    Binomial::new(n, p).expect("p in (0,1)").sample(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn zero_angle_never_fires() {
        let inst = ProblemInstance::noiseless(0.0).unwrap();
        assert_eq!(outcome_probability(&inst, 5, Basis::Standard, false), 0.0);
        let b = sample_batch(&inst, 3, Basis::Standard, false, 1000, 99).unwrap();
        assert_eq!(b.count_one, 0);
    }

    #[test]
    fn right_angle_always_fires() {
        let inst = ProblemInstance::noiseless(FRAC_PI_2).unwrap();
        assert_eq!(outcome_probability(&inst, 0, Basis::Standard, false), 1.0);
        let b = sample_batch(&inst, 0, Basis::Standard, false, 1000, 3).unwrap();
        assert_eq!(b.count_one, 1000);
    }

    #[test]
    fn noisy_value_matches_high_precision_oracle() {
        // mpmath, 40 digits: 1/2 - 1/2 e^{-0.007} cos(9)
        let inst = ProblemInstance::new(0.3, 1e-3).unwrap();
        let p = outcome_probability(&inst, 7, Basis::Standard, false);
        assert_relative_eq!(p, 0.952_387_310_373_821_990_1, max_relative = 1e-12);
    }

    #[test]
    fn empirical_frequency_within_three_sigma() {
        let inst = ProblemInstance::noiseless(0.3).unwrap();
        let shots = 1_000_000;
        let b = sample_batch(&inst, 1, Basis::Standard, false, shots, 42).unwrap();
        let p = 0.9f64.sin().powi(2);
        let se = (p * (1.0 - p) / shots as f64).sqrt();
        let freq = b.count_one as f64 / shots as f64;
        assert!((freq - p).abs() < 3.0 * se, "freq {freq} p {p} se {se}");
    }

    #[test]
    fn rejects_zero_shots_and_bad_instances() {
        let inst = ProblemInstance::noiseless(0.2).unwrap();
        assert!(sample_batch(&inst, 1, Basis::Standard, false, 0, 1).is_err());
        assert!(ProblemInstance::new(-0.1, 0.0).is_err());
        assert!(ProblemInstance::new(1.6, 0.0).is_err());
        assert!(ProblemInstance::new(0.3, -1e-3).is_err());
        assert!(ProblemInstance::new(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn hadamard_basis_matches_shifted_phase() {
        let inst = ProblemInstance::noiseless(0.41).unwrap();
        let x = 5.0 * 0.41;
        let p = outcome_probability(&inst, 2, Basis::Hadamard, false);
        assert_relative_eq!(p, (x + FRAC_PI_4).sin().powi(2), epsilon = 1e-15);
        let shifted = outcome_probability(&inst, 2, Basis::Standard, true);
        assert_relative_eq!(shifted, (5.0 * (0.41 - FRAC_PI_4)).sin().powi(2), epsilon = 1e-15);
    }

    #[test]
    fn batch_cost_counts_two_k_plus_one() {
        let b = MeasurementBatch { depth: 4, basis: Basis::Standard, shots: 10, count_one: 3 };
        assert_eq!(b.oracle_calls(), 90);
        assert_eq!(b.count_zero(), 7);
    }

    proptest! {
        #[test]
        fn probability_is_a_probability(
            theta in 0.0..=FRAC_PI_2, gamma in 0.0..5.0f64, depth in 0u64..10_000,
            hadamard: bool, shifted: bool,
        ) {
            let basis = if hadamard { Basis::Hadamard } else { Basis::Standard };
            let p = outcome_probability_with(theta, gamma, depth, basis, shifted);
            prop_assert!((0.0..=1.0).contains(&p));
        }

        #[test]
        fn noiseless_limit_is_sin_squared(theta in 0.0..=FRAC_PI_2, depth in 0u64..1000) {
            let cos_form = 0.5 - 0.5 * (2.0 * (2 * depth + 1) as f64 * theta).cos();
            let p = outcome_probability_with(theta, 0.0, depth, Basis::Standard, false);
            prop_assert!((p - cos_form).abs() < 1e-12);
        }

        #[test]
        fn damping_is_monotone_in_gamma(
            theta in 0.0..=FRAC_PI_2, g1 in 0.0..1.0f64, dg in 0.0..1.0f64, depth in 0u64..200,
            hadamard: bool,
        ) {
            let basis = if hadamard { Basis::Hadamard } else { Basis::Standard };
            let lo = (outcome_probability_with(theta, g1, depth, basis, false) - 0.5).abs();
            let hi = (outcome_probability_with(theta, g1 + dg, depth, basis, false) - 0.5).abs();
            prop_assert!(hi <= lo + 1e-15);
        }

        #[test]
        fn sampling_is_reproducible(theta in 0.0..=FRAC_PI_2, seed: u64, shots in 1u64..100_000) {
            let inst = ProblemInstance::new(theta, 1e-3).unwrap();
            let a = sample_batch(&inst, 3, Basis::Hadamard, true, shots, seed).unwrap();
            let b = sample_batch(&inst, 3, Basis::Hadamard, true, shots, seed).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a.count_one <= shots);
        }
    }
}
