use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid root: {0}")]
    InvalidRoot(String),

    #[error("root system construction failed: {0}")]
    Construction(String),

    #[error("unsupported system: {0}")]
    UnsupportedSystem(String),

    #[error("quadrature budget exceeded (best value {best:.6e}, error estimate {error:.3e})")]
    BudgetExceeded { best: f64, error: f64 },

    #[error("evaluation on the wall of root {root:?} without a limit fallback")]
    WallSingularity { root: Vec<f64> },

    #[error("insufficient decay: truncation tail {tail:.3e} exceeds tolerance {tol:.3e}")]
    TailBound { tail: f64, tol: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
