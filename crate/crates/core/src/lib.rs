//! Simulator and benchmark harness for low-depth quantum amplitude estimation.
//!
//! Two estimators trade circuit depth against oracle calls:
//!
//! * [`powerlaw`]: grid Bayesian maximum likelihood over power-law query
//!   schedules `m_k = floor(k^((1-beta)/(2*beta)))`.
//! * [`qoprime`]: residues of the hidden angle modulo products of odd coprime
//!   moduli, estimated at low depth and recombined with the Chinese remainder
//!   theorem.
//!
//! The quantum oracle is modelled analytically ([`oracle`]): a depth-`k`
//! circuit yields a Bernoulli outcome whose bias follows the depolarizing
//! channel `p = 1/2 - 1/2 e^{-gamma k} cos(2(2k+1)theta)`.

pub mod baselines;
pub mod bench;
pub mod cli;
pub mod error;
pub mod numtheory;
pub mod oracle;
pub mod powerlaw;
pub mod qoprime;
pub mod report;
pub mod rng;
pub mod schedules;

pub use error::{Error, Result};
pub use oracle::{Basis, MeasurementBatch, ProblemInstance};
pub use report::EstimateReport;
pub use schedules::{PowerLawParams, Schedule};
