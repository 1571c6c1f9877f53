use thiserror::Error;

/// Failures of the numeric routines (estimation, spectral analysis, design,
/// simulation and market planning).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnError {
    #[error("history is empty")]
    EmptyHistory,
    #[error("information matrix is rank deficient: numerical rank {rank} of {dim}")]
    RankDeficient { rank: usize, dim: usize },
    #[error("state is not full rank; covariance unavailable")]
    StateNotFullRank,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("matrix is not symmetric (relative asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is not positive definite (smallest eigenvalue {0:e})")]
    NotPositiveDefinite(f64),
    #[error("bias vector is zero")]
    ZeroBias,
    #[error("anchor bundle is parallel to the bias vector")]
    AnchorParallel,
    #[error("no nonzero bundle is orthogonal to a bias vector in one dimension")]
    NoOrthogonalDirection,
    #[error("sign requirement violated: {0}")]
    SignViolation(String),
    #[error("interaction coefficient is zero; use the interaction-free ratio")]
    DegenerateInteraction,
    #[error("augmented information matrix is singular")]
    SingularAugmentedZ,
    #[error("strategy infeasible: {0}")]
    StrategyInfeasible(String),
}

pub type Result<T, E = LearnError> = std::result::Result<T, E>;
