use std::fmt;

use thiserror::Error;

/// A single problem found while validating raw model parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamViolation {
    OutOfRange { field: &'static str, value: f64 },
    OrderingViolation { pi_plus: f64, pi_minus: f64 },
}

impl fmt::Display for ParamViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamViolation::OutOfRange { field, value } => {
                write!(f, "OutOfRange({field}={value})")
            }
            ParamViolation::OrderingViolation { pi_plus, pi_minus } => write!(
                f,
                "OrderingViolation(pi_plus={pi_plus} < pi_minus={pi_minus} under mean link)"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}", join_violations(.0))]
    InvalidParams(Vec<ParamViolation>),
    #[error("{field} = {value} is outside its admissible range")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("series has {len} observations, at least {needed} required")]
    SeriesTooShort { len: usize, needed: usize },
    #[error("objective {objective:e} above tolerance {tol:e} after {evals} evaluations")]
    NoConvergence {
        objective: f64,
        tol: f64,
        evals: usize,
    },
    #[error("edge probabilities (pi_plus={pi_plus}, pi_minus={pi_minus}, link={link}) leave the joint chain without a unique stationary law")]
    ReducibleChain {
        pi_plus: f64,
        pi_minus: f64,
        link: f64,
    },
    #[error("joint chain limited to n <= {max}, got n = {n}")]
    ChainTooLarge { n: usize, max: usize },
    #[error("two-sample test needs nonempty samples")]
    EmptySample,
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join_violations(v: &[ParamViolation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    /// Stable machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidParams(v) => match v.first() {
                Some(ParamViolation::OrderingViolation { .. }) => "OrderingViolation",
                _ => "OutOfRange",
            },
            Error::OutOfRange { .. } => "OutOfRange",
            Error::SeriesTooShort { .. } => "SeriesTooShort",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::ReducibleChain { .. } => "ReducibleChain",
            Error::ChainTooLarge { .. } => "ChainTooLarge",
            Error::EmptySample => "EmptySample",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoFailure",
        }
    }

    /// Whether the error stems from bad input rather than a runtime failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::NoConvergence { .. } | Error::Io(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
