//! Error types shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A field, parameter vector or tuple has the wrong dimensions.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A grid is too small for the requested operation (stencil extraction,
    /// propagation, ...).
    #[error("sizing: {0}")]
    Sizing(String),

    /// An operation was called on data it is not defined for (e.g. periodic
    /// index wrapping on a Dirichlet grid).
    #[error("misuse: {0}")]
    Misuse(String),

    /// Required input data is missing or invalid (e.g. velocities absent for a
    /// non-degenerate density).
    #[error("input: {0}")]
    Input(String),

    /// A Newton Jacobian or conditioning matrix is numerically singular.
    #[error("singular system in {context}: smallest singular value {sigma_min:.3e}")]
    Singular { context: String, sigma_min: f64 },

    /// Newton iteration failed to meet the residual tolerance.
    #[error("no convergence after {iterations} iterations (last residual {last_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        last_residual: f64,
        residuals: Vec<f64>,
    },

    /// The requested derivative or serialization is not supported for this
    /// model composition.
    #[error("capability: {0}")]
    Capability(String),

    /// A loss or gradient became non-finite during training.
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFinite {
        what: String,
        epoch: usize,
        batch: usize,
        /// Parameters from the last completed epoch, for post-mortem restarts.
        last_good: Vec<f64>,
    },

    /// Persistence format violations.
    #[error("parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable category label (used by the CLI for exit codes).
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::Sizing(_) => "sizing",
            Error::Misuse(_) => "misuse",
            Error::Input(_) => "input",
            Error::Singular { .. } => "singular",
            Error::NonConvergence { .. } => "no-convergence",
            Error::Capability(_) => "capability",
            Error::NonFinite { .. } => "non-finite",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }
}
