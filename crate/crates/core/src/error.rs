use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot at node {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid extent: {0}")]
    InvalidExtent(String),

    #[error("index {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("unsupported operator power {0} (only 1 and 2 are available)")]
    UnsupportedPower(u32),

    #[error("torus of side {side} is too small for lag {lag} (must not exceed half the side)")]
    TorusTooSmall { side: f64, lag: f64 },

    #[error("aggregation factor {factor} does not divide the {axis} extent {extent}")]
    IndivisibleFactor {
        axis: &'static str,
        factor: usize,
        extent: usize,
    },

    #[error("log marginal likelihood is not finite")]
    NonFiniteLikelihood,

    #[error("optimizer stopped after {iterations} iterations without converging")]
    MaxIterationsExceeded { iterations: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("region graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{}:{line}: {message}", path.display())]
    Schema {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: {message}", path.display())]
    Bounds {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: duplicate cell ({x}, {y}, {t})", path.display())]
    DuplicateCell {
        path: PathBuf,
        line: usize,
        x: usize,
        y: usize,
        t: usize,
    },

    #[error("covariate '{name}' has no value for fine node ({x}, {y}, {t})")]
    CovariateGap {
        name: String,
        x: usize,
        y: usize,
        t: usize,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used by the command-line front end to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Validation,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_) | Error::Csv(_) | Error::Json(_) => ErrorClass::Io,
            Error::NotPositiveDefinite { .. }
            | Error::NonFiniteLikelihood
            | Error::MaxIterationsExceeded { .. }
            | Error::DegenerateData(_) => ErrorClass::Numerical,
            _ => ErrorClass::Validation,
        }
    }
}
