use thiserror::Error;

/// Errors raised by the solvers, the benchmark models and the runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model evaluation failed: {0}")]
    Model(String),

    #[error("singular KKT system ({0} zero pivots)")]
    Singular(usize),

    #[error("inertia correction failed: regularization exceeded {0:e}")]
    Regularization(f64),

    #[error("line search failed: step fell below {0:e}")]
    LineSearch(f64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Dimension(format!(
            "{what}: got {got}, expected {expected}"
        )));
    }
    Ok(())
}
