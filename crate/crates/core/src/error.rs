use thiserror::Error;

/// Errors raised while configuring or running a simulation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("eta lag {lag} exceeds the table length {max_lag}")]
    LagOutOfRange { lag: usize, max_lag: usize },

    #[error("path table for memory length {memory_steps} needs {bytes} bytes, budget is {budget} bytes")]
    MemoryBudget {
        memory_steps: usize,
        bytes: u128,
        budget: u128,
    },

    #[error("brute force over {paths} paths exceeds the guard of {limit}")]
    TooManyPaths { paths: u128, limit: u128 },

    #[error("path key mismatch: {0}")]
    KeyMismatch(String),

    #[error("time vector is not on the boundary face: {0}")]
    NotOnBoundary(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("series comparison failed: {0}")]
    Compare(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
