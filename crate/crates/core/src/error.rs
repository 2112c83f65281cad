use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A computation would exceed a configured size cap.
    #[error("{what} of size {size} exceeds the cap of {cap}")]
    Size {
        what: &'static str,
        size: usize,
        cap: usize,
    },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("matrix is not Hermitian (deviation {deviation:.3e} exceeds tolerance {tolerance:.3e})")]
    Hermiticity { deviation: f64, tolerance: f64 },
    #[error("state is not pure (purity {purity:.12})")]
    Purity { purity: f64 },
    #[error("invalid state: {0}")]
    State(String),
    #[error("functional is trivial: its LHV constant is zero")]
    TrivialFunctional,
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
