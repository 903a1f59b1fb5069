//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: expected {expected} px, got {got} px")]
    GridMismatch { expected: usize, got: usize },

    #[error("unsupported glyph {0:?}; built-in set covers A-Z, 0-9 and space")]
    UnsupportedGlyph(char),

    #[error("sample support violation: {0}")]
    SupportViolation(String),

    #[error("operation requires a nonempty slice stack")]
    EmptyStack,

    #[error("unsupported recording geometry: {0}")]
    UnsupportedGeometry(String),

    #[error("no connected component above threshold; use a loose mask instead")]
    NoComponent,

    #[error("all detector pixels are masked invalid; residual is undefined")]
    AllPixelsInvalid,

    #[error("reconstruction diverged (non-finite values) at iteration {iteration}, seed {seed}")]
    Diverged { iteration: usize, seed: u64 },

    #[error("constraint set has {constraints} planes but stack has {planes}")]
    ConstraintMismatch { planes: usize, constraints: usize },
}
