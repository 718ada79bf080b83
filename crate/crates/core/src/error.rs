use thiserror::Error;

/// Errors raised while building operators, sketches, preconditioners or
/// running experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("matrix is not symmetric (|a[{row}][{col}] - a[{col}][{row}]| = {diff:e})")]
    NotSymmetric { row: usize, col: usize, diff: f64 },

    #[error("input is indefinite: eigenvalue {value:e} below tolerance {tolerance:e}")]
    IndefiniteInput { value: f64, tolerance: f64 },

    #[error("symmetric eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },

    #[error("sketch is numerically rank deficient: |R[{index}][{index}]| = {value:e}")]
    RankDeficientSketch { index: usize, value: f64 },

    #[error("sketch GΩ is identically zero")]
    ZeroSketch,

    #[error("single-pass core Θᵀ Ω is ill-conditioned (condition estimate {condition:e})")]
    IllConditionedCore { condition: f64 },

    #[error("non-positive diagonal entry {value:e} at index {index}")]
    NonPositiveDiagonal { index: usize, value: f64 },

    #[error("diagonal block {block} is not positive definite")]
    BlockNotPositiveDefinite { block: usize },

    #[error("partial Cholesky broke down at step {step} (Schur diagonal {value:e})")]
    PartialCholeskyBreakdown { step: usize, value: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dense cap exceeded: n = {n} > {cap}; use sampling or iterative estimation instead")]
    DenseCapExceeded { n: usize, cap: usize },

    #[error("skipped: {what} needs {entries} dense entries, above the budget of {budget}")]
    MemoryBudget { what: &'static str, entries: usize, budget: usize },

    #[error("stability violated: Δt/Δx² = {ratio} > 0.5")]
    Unstable { ratio: f64 },

    #[error("matrix market: {0}")]
    MatrixMarket(String),

    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
