//! Error type shared by every module of the crate.

use thiserror::Error;

/// Unified error enum. Solver non-convergence is deliberately *not* an error:
/// iterative solvers return their best iterate with a `converged` flag instead.
#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not match the declared system sizes.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// The mass matrix failed the symmetry check or the Cholesky factorization.
    #[error("mass matrix is not symmetric positive definite: {0}")]
    MassNotSpd(String),

    /// Two nodal series (or a series and a grid) live on different time grids.
    #[error("time grid mismatch: {0}")]
    GridMismatch(String),

    /// The Newmark effective matrix M + γ·dt·C + β·dt²·K is numerically singular.
    #[error("singular Newmark effective matrix (dt = {dt})")]
    SingularEffectiveMatrix { dt: f64 },

    /// An invalid parameter value (weights, grid, Newmark constants, ...).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The assembled preconditioner is numerically singular.
    #[error("preconditioner is numerically singular (rank {rank} of {dim})")]
    PrecondSingular { rank: usize, dim: usize },

    /// A system file could not be parsed.
    #[error("parse error at line {line}: {msg}")]
    ParseError { line: usize, msg: String },

    /// A run configuration is invalid or inconsistent.
    #[error("config error: {0}")]
    ConfigError(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
