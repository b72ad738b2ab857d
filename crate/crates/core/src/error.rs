use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("invalid scenario parameter: {0}")]
    InvalidParameter(String),
    #[error("Y lower-bound violation: {0}")]
    YLowerBound(String),
    /// `d/dt` must be timelike.
    #[error("timelike condition violated: {0}")]
    Timelike(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("field invariant violated at site {site}: {what}")]
    FieldInvariant { site: usize, what: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },
    #[error("L is not positive at t = {t}: min eigenvalue {min_eig:e}")]
    LNotPositive { t: f64, min_eig: f64 },
    /// Bound on `A` exceeded, or `B` not invertible.
    #[error("positive-mass violation at t = {t}: {what}")]
    PositiveMass { t: f64, what: String },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("window exceeded: {0}")]
    Window(String),
    #[error("incompatible endpoints: {0}")]
    Endpoints(String),
    #[error("no convergence after {} iterates: {reason}", history.len())]
    NoConvergence { reason: String, history: Vec<f64> },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("malformed file: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// True for violations of the positivity / positive-mass assumptions,
    /// as opposed to malformed input or numerical breakdown.
    pub fn is_assumption_violation(&self) -> bool {
        matches!(
            self,
            Error::YLowerBound(_)
                | Error::Timelike(_)
                | Error::FieldInvariant { .. }
                | Error::LNotPositive { .. }
                | Error::PositiveMass { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
