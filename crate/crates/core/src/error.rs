use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Adaptive quadrature ran out of subdivisions; carries the best estimate reached.
    #[error("quadrature did not converge: estimate {estimate} with error {error_estimate} after {subdivisions} subdivisions")]
    AccuracyFailure {
        estimate: f64,
        error_estimate: f64,
        subdivisions: usize,
    },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("infeasible sev tolerance {epsilon}: the smallest attainable sev is {sev_min}")]
    Infeasible { epsilon: f64, sev_min: f64 },

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("consistency check failed: {0}")]
    Consistency(String),

    #[error("posterior evaluation failed for {failed} of {total} observations")]
    TooManyFailures { failed: usize, total: usize },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

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
