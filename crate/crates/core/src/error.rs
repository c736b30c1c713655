use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("graphon is infinite at grid pair ({x}, {y}); choose a singular policy")]
    SingularGrid { x: f64, y: f64 },
    #[error("L^{p} norm diverges for this graphon")]
    DivergentNorm { p: f64 },
    #[error("adjacency matrix is not symmetric at ({i}, {j})")]
    NonSymmetric { i: usize, j: usize },
    #[error("adjacency matrix has a nonzero diagonal entry at {0}")]
    NonZeroDiagonal(usize),
    #[error("interaction weight {weight} exceeds one at ({i}, {j})")]
    WeightExceedsOne { i: usize, j: usize, weight: f64 },
    #[error("combined support of {size} atoms exceeds the exact-solver cap of {cap}; use the dictionary estimate")]
    SupportTooLarge { size: usize, cap: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("total masses differ: {0} vs {1}")]
    MassMismatch(f64, f64),
    #[error("operation requires dimension {expected}, found {found}")]
    WrongDimension { expected: usize, found: usize },
    #[error("non-finite state at step {step} (particle {particle})")]
    NonFiniteState { step: usize, particle: usize },
    #[error("time grids differ")]
    GridMismatch,
    #[error("particle key {0:#x} collides with the auxiliary key namespace")]
    KeyCollision(u64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code: 2 for rejected input, 3 for numerical aborts, 1 for IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteState { .. }
            | Error::DivergentNorm { .. }
            | Error::SupportTooLarge { .. }
            | Error::DegenerateFit(_) => 3,
            Error::Io { .. } => 1,
            _ => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
