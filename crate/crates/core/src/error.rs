use thiserror::Error;

/// Errors raised by the simulator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain mismatch: expected {expected} points, got {found}")]
    DomainMismatch { expected: usize, found: usize },

    #[error("domain must contain at least one point")]
    EmptyDomain,

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid hypothesis: {0}")]
    InvalidHypothesis(String),

    #[error("mixture weights sum to {sum}, expected 1")]
    WeightSum { sum: f64 },

    #[error("weight vector has {found} entries, expected {expected}")]
    WeightShape { expected: usize, found: usize },

    #[error("conditioning event has zero probability")]
    ZeroMassEvent,

    #[error("hypothesis class is not enumerable: {0}")]
    NotEnumerable(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error(
        "scripted hypothesis at call {call} is infeasible: risk {achieved} exceeds minimum {minimum} + epsilon {epsilon}"
    )]
    InfeasibleScript {
        call: usize,
        achieved: f64,
        minimum: f64,
        epsilon: f64,
    },

    #[error("scripted minimizer exhausted after {0} calls")]
    ScriptExhausted(usize),

    #[error("minimizer returned risk {achieved} above minimum {minimum} + epsilon {epsilon}")]
    OracleContract {
        achieved: f64,
        minimum: f64,
        epsilon: f64,
    },

    #[error("invalid epsilon {0}: 1/epsilon must be a positive integer")]
    InvalidEpsilon(f64),

    #[error("witness construction infeasible: {0}")]
    WitnessInfeasible(String),

    #[error("hypothesis at step {step} is not a member of the interval class")]
    MembershipViolation { step: usize },

    #[error("noise mass {delta} does not dominate epsilon {epsilon}")]
    DeltaNotDominant { delta: f64, epsilon: f64 },

    #[error("descent certificate {value} below {required}")]
    DescentViolation { value: f64, required: f64 },

    #[error("weak learner risk {risk} is not below one half")]
    StalledWeakLearner { risk: f64 },

    #[error("z score undefined: every round pair has zero joint error mass")]
    UndefinedScore,

    #[error("degenerate variance in correlation input")]
    DegenerateVariance,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors that mean the risk-minimizer oracle broke its contract.
    pub fn is_oracle_violation(&self) -> bool {
        matches!(
            self,
            Error::InfeasibleScript { .. }
                | Error::OracleContract { .. }
                | Error::DescentViolation { .. }
                | Error::StalledWeakLearner { .. }
                | Error::ScriptExhausted(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
