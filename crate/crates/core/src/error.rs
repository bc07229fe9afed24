use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum StrupError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("operation not supported: {0}")]
    Capability(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("integrator could not reach requested accuracy: {0}")]
    Accuracy(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("training diverged (non-finite loss) at epoch {0}")]
    Divergence(usize),

    #[error("unknown system: {0}")]
    Lookup(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, StrupError>;
