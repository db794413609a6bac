use thiserror::Error;

/// Errors raised anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing label: {0}")]
    MissingLabel(String),

    #[error("identification failure: {0}")]
    RankDeficient(String),

    #[error("no convergence after {iterations} iterations (gradient inf-norm {gradient_norm:.3e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },

    #[error("separation/divergence: coefficient inf-norm {max_abs:.3e} exceeded cap {cap:.1e}")]
    Separation { max_abs: f64, cap: f64 },

    #[error("{what} is singular or ill-conditioned (condition number {condition:.3e})")]
    Singular { what: String, condition: f64 },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse error classes, used by the command line to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::DimensionMismatch(_)
            | Error::NonFinite(_)
            | Error::Invalid(_)
            | Error::MissingLabel(_) => ErrorClass::Validation,
            Error::RankDeficient(_)
            | Error::NotConverged { .. }
            | Error::Separation { .. }
            | Error::Singular { .. } => ErrorClass::Numerical,
            Error::Io(_) | Error::Json(_) => ErrorClass::Io,
            // Malformed csv content is a validation problem, a failed read is not.
            Error::Csv(e) => match e.kind() {
                csv::ErrorKind::Io(_) => ErrorClass::Io,
                _ => ErrorClass::Validation,
            },
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
