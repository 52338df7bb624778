use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} states, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Kernel data violates one of the affine-kernel constraints.
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    /// A black-box evaluator produced a matrix that is not row-stochastic.
    /// `row` is 1-based.
    #[error("kernel evaluation returned a non-stochastic matrix at row {row}: {detail}")]
    NonStochasticRow { row: usize, detail: String },

    #[error(
        "regime inconclusive, no bound available (alpha_k = {alpha_k}, lambda_k = {lambda_k}): \
         convergence needs 0 < alpha_k and lambda_k <= alpha_k; \
         when lambda > alpha there may be either an infinite number of invariant measures or none at all"
    )]
    Inconclusive { alpha_k: f64, lambda_k: f64 },

    #[error("empty search set")]
    EmptySearchSet,

    #[error("no admissible measure pair with separation >= {min_sep}")]
    NoAdmissiblePair { min_sep: f64 },

    #[error("kernel file: {0}")]
    KernelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
