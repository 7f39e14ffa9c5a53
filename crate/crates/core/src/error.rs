use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the range where the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// Grid, solver or averaging configuration is inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite: pivot {index} = {pivot:e}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    /// Circulant embedding produced an eigenvalue too negative to clamp.
    #[error("circulant eigenvalue {value:e} at mode {index} is below the clamp threshold {threshold:e}")]
    NegativeEigenvalue { index: usize, value: f64, threshold: f64 },

    /// The solver produced a NaN or infinite value.
    #[error("non-finite field value at step {step}, cell {cell}")]
    NonFinite { step: usize, cell: usize },

    /// Adaptive quadrature ran out of subdivisions before reaching the tolerance.
    #[error("quadrature did not converge: estimated error {achieved:e} > requested {requested:e}")]
    Quadrature { achieved: f64, requested: f64 },

    /// Randomized QMC standard error above the accepted threshold.
    #[error("QMC relative standard error {rel_stderr:.4} exceeds {limit:.4}; increase the point count")]
    QmcPrecision { rel_stderr: f64, limit: f64 },

    /// Input samples are unusable (too few, zero spread, non-finite).
    #[error("degenerate samples: {0}")]
    Degenerate(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
