use thiserror::Error;

/// Errors raised by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("point outside evaluation box: {0}")]
    Domain(String),
    #[error("quadrature box does not cover the sublevel set: {0}")]
    Coverage(String),
    #[error("unsupported level-set geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("near-critical level set: {0}")]
    NearCritical(String),
    #[error("eigensolver did not converge for l = {l}: {msg}")]
    NonConvergence { l: usize, msg: String },
    #[error("test function support exceeds the known spectrum: {0}")]
    Truncation(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("regularized system is singular: {0}; try a larger Tikhonov weight")]
    Regularization(String),
    #[error("inversion failed: {0}")]
    Inversion(String),
    #[error("non-positive divisor at s = {s}")]
    Division { s: f64 },
    #[error("flow stagnated: {0}")]
    Stagnation(String),
    #[error("degenerate trajectory: all points coincide")]
    DegenerateTrajectory,
    #[error("ill-conditioned: {0}")]
    IllConditioned(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("report assembly: missing {0}")]
    Assembly(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by bad input or configuration rather than by
    /// a numerical failure.
    pub fn is_configuration(&self) -> bool {
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Config(_)
                | Error::Domain(_)
                | Error::InsufficientData(_)
                | Error::Parse(_)
                | Error::Assembly(_)
        )
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                _ => unreachable!(),
            }
        } else {
            Error::Parse(e.to_string())
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Parse(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
