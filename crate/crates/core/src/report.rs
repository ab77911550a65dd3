//! Estimator output shared by every algorithm.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::ClassicalDiagnostics;
use crate::error::{Error, Result};
use crate::qoprime::QoPrimeDiagnostics;
use crate::schedules::Schedule;

/// Bumped whenever a field of the JSON report changes meaning or disappears.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "powerlaw")]
    PowerLaw,
    #[serde(rename = "qoprime")]
    QoPrime,
    #[serde(rename = "classical")]
    Classical,
    #[serde(rename = "exp-mle")]
    ExponentialMle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] =
        [Algorithm::PowerLaw, Algorithm::QoPrime, Algorithm::Classical, Algorithm::ExponentialMle];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::PowerLaw => "powerlaw",
            Algorithm::QoPrime => "qoprime",
            Algorithm::Classical => "classical",
            Algorithm::ExponentialMle => "exp-mle",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm '{s}'")))
    }
}

/// Per-algorithm details. Only the fields relevant to the run are present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_shot: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_aware: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub repetitions: Option<usize>,
    /// Depth-ceiling flag: `γ · max_depth >= 1`, beyond which deeper
    /// circuits carry little information.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub saturated: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qoprime: Option<QoPrimeDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classical: Option<ClassicalDiagnostics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema_version: u32,
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub gamma: f64,
    pub theta_hat: f64,
    /// Filled in by callers that know the hidden angle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_true: Option<f64>,
    /// `|theta_hat - theta_true| <= epsilon`, when the truth is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub success: Option<bool>,
    pub oracle_calls: u64,
    pub max_depth: u64,
    pub wall_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule_used: Option<Schedule>,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub fn new(algorithm: Algorithm, epsilon: f64, gamma: f64, theta_hat: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            algorithm,
            epsilon,
            gamma,
            theta_hat,
            theta_true: None,
            success: None,
            oracle_calls: 0,
            max_depth: 0,
            wall_ms: 0.0,
            schedule_used: None,
            diagnostics: Diagnostics::default(),
        }
    }

    /// Record the hidden angle and grade the estimate against `epsilon`.
    pub fn with_truth(mut self, theta: f64) -> Self {
        self.theta_true = Some(theta);
        self.success = Some(self.abs_error().expect("truth set") <= self.epsilon);
        self
    }

    pub fn abs_error(&self) -> Option<f64> {
        self.theta_true.map(|t| (self.theta_hat - t).abs())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub(crate) fn saturating_calls(calls: u128) -> u64 {
    u64::try_from(calls).unwrap_or(u64::MAX)
}
