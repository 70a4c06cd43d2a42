//! Crate-wide error type.

/// Convenience alias used by every fallible operation in the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("external angle is not a rational multiple of pi: {0}")]
    NonRationalAngle(String),

    #[error("canonical angle set infeasible: {0}")]
    InfeasibleCanonicalSet(String),

    #[error("canonical angle selection failed after {retries} candidate draws")]
    SelectionFailure { retries: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("derivative order {order} exceeds maximum {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("least-squares system rank deficient: rank {rank} of {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("embedding system violates the solvability assumption: {0}")]
    AssumptionViolation(String),

    #[error("Lambda(theta, alpha) = 0: naive quotient undefined, dispatch required")]
    DivisionBranch,

    #[error("dispatch precondition violated: {0}")]
    Dispatch(String),

    #[error("degenerate denominator: leading series term {0:.3e}")]
    DegenerateDenominator(f64),

    #[error("evaluation point at |x| = {r:.6} lies inside the validity ball R = {radius:.6}")]
    OutsideValidity { r: f64, radius: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file: {0}")]
    FileFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
