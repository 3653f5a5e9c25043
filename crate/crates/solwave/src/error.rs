use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("model evaluation produced a non-finite value at z = {z:?}")]
    ModelEval { z: Vec<f64> },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "degenerate component {j}: b_j = {b:e} fell below the floor {floor:e}; \
         the charge constraint forces the frequency to blow up — try a different \
         sigma or initial guess"
    )]
    DegenerateComponent { j: usize, b: f64, floor: f64 },

    #[error("undefined operation: {0}")]
    Undefined(String),

    #[error("parse error in {path:?} at line {line}: {message}")]
    ConfigParse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
