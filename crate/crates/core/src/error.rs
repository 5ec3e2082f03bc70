use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported regime: {0}")]
    UnsupportedRegime(String),

    #[error("time step too coarse: {0}")]
    StepTooCoarse(String),

    #[error("no sign change in bracket [{lo}, {hi}]")]
    RootBracket { lo: f64, hi: f64 },

    #[error("quadrature did not converge on [{a}, {b}] (estimated error {error:e})")]
    QuadratureNonConvergence { a: f64, b: f64, error: f64 },

    #[error("degenerate rate generator: {0}")]
    DegenerateGenerator(String),

    #[error("population sum drifted by {drift:e} at t = {time:e} s")]
    PopulationDrift { drift: f64, time: f64 },

    #[error("value {value} outside tabulated domain [{lo}, {hi}]")]
    OutOfDomain { value: f64, lo: f64, hi: f64 },

    #[error("empty input: {0}")]
    Empty(String),

    #[error("histogram configurations differ: {0}")]
    ConfigMismatch(String),

    #[error("did not converge: {0}")]
    NonConvergence(String),

    #[error("rank-deficient Jacobian: {0}")]
    RankDeficient(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of iterative or series procedures to converge.
    pub fn is_non_convergence(&self) -> bool {
        matches!(
            self,
            Error::NonConvergence(_) | Error::QuadratureNonConvergence { .. }
        )
    }
}
