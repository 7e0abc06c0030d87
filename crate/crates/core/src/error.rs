use thiserror::Error;

/// Errors raised by the linear-algebra primitives, datum validation and the
/// operator-scaling reduction.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:.3e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.6e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("map {map} is not surjective: numerical rank {rank} < {rows} rows")]
    RankDeficient {
        map: usize,
        rank: usize,
        rows: usize,
    },

    #[error(
        "scaling condition violated: sum_j p_j n_j = {numerator}/{denominator}, expected n = {n}"
    )]
    ScalingViolation {
        numerator: u128,
        denominator: u128,
        n: usize,
    },

    #[error("exponent {map} is negative")]
    NegativeExponent { map: usize },

    #[error("exponent {map} has a zero denominator")]
    ZeroDenominator { map: usize },

    #[error("invalid datum: {0}")]
    InvalidDatum(String),

    #[error("aggregate sum_j p_j B_j^T A_j B_j is numerically singular")]
    SingularAggregate,

    #[error(
        "operator-scaling instance has input dimension n*c = {dim}, above the cap {cap}; \
         the reduction grows with the exponent denominators"
    )]
    DimensionCapExceeded { dim: usize, cap: usize },

    #[error("scaling operator is singular: Kraus Gram sums are not positive definite")]
    SingularOperator,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
