use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Fisher information diverges for schedule entry {entry} (depth {depth})")]
    FisherDivergence { entry: usize, depth: u64 },

    #[error("schedule has {rounds} rounds, above the limit of {limit}")]
    ScheduleTooLarge { rounds: u64, limit: u64 },

    #[error("schedule and observations disagree at entry {0}")]
    ObservationMismatch(usize),

    #[error("posterior underflowed: observations are inconsistent with every grid angle")]
    PosteriorUnderflow,

    #[error("moduli are not pairwise coprime: gcd({a}, {b}) = {gcd}")]
    NotCoprime { a: u128, b: u128, gcd: u128 },

    #[error("no {k} odd coprime moduli >= 3 fit precision {epsilon:e}: (pi/eps)^(1/k) = {root:.3} < 3")]
    InfeasibleModuli { k: usize, epsilon: f64, root: f64 },

    #[error("sample budget of {required:e} oracle calls exceeds the cap of {cap:e}; choose shallower (k, q)")]
    SampleBudgetExceeded { required: f64, cap: f64 },

    #[error("residue estimates are inconsistent: confidence arcs have empty intersection")]
    EmptyIntersection,

    #[error("degenerate regression data: {0}")]
    DegenerateData(String),

    #[error("io: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

impl Error {
    /// Whether the error stems from sampling randomness or a budget guard
    /// rather than from malformed input.
    pub fn is_estimation_failure(&self) -> bool {
        matches!(
            self,
            Error::PosteriorUnderflow
                | Error::EmptyIntersection
                | Error::SampleBudgetExceeded { .. }
                | Error::FisherDivergence { .. }
        )
    }
}

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
