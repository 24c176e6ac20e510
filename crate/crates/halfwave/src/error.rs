use thiserror::Error;

/// Error type shared by the whole toolbox.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration (grid sizes, exponents, scales).
    #[error("configuration: {0}")]
    Config(String),
    /// API misuse (representation mismatch, unknown direction, ...).
    #[error("usage: {0}")]
    Usage(String),
    /// Non-finite values or failed numerical checks.
    #[error("numeric: {0}")]
    Numeric(String),
    /// A validated bound (Nyquist margin, wraparound, aliasing) was violated.
    #[error("validation: {0}")]
    Validation(String),
    /// The nonlinear solver diverged.
    #[error("blow-up detected at t = {t}")]
    BlowUp { t: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
