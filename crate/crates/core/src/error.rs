use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("time {t} outside interval [{t_min}, {t_max}]")]
    OutOfInterval { t: f64, t_min: f64, t_max: f64 },

    #[error(
        "Picard iteration did not converge after {iterations} iterations \
         (last increment {increment:e}, last contraction ratio {ratio:.4})"
    )]
    Convergence {
        iterations: usize,
        increment: f64,
        ratio: f64,
    },

    #[error(
        "power iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    PowerIteration { iterations: usize, residual: f64 },

    #[error("numerical inconsistency: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
