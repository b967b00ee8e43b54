//! Error type shared across the crate.

use thiserror::Error;

/// Errors raised by model construction, estimator updates, and the theory
/// and harness layers.
#[derive(Debug, Clone, Error)]
pub enum CoreError {
    /// Matrix or vector shapes do not agree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A matrix expected to be symmetric is not, within tolerance.
    #[error("matrix is not symmetric within tolerance {tolerance:e} (max asymmetry {defect:e})")]
    NotSymmetric { defect: f64, tolerance: f64 },

    /// A pooled or per-task linear system has numerically deficient rank.
    #[error("rank-deficient system: rank {rank} < dimension {dimension}")]
    RankDeficient { rank: usize, dimension: usize },

    /// A regularized solve hit a singular matrix; the listed coordinates are
    /// (near-)null directions of the system matrix.
    #[error("singular system: null directions at coordinates {null_directions:?}")]
    SingularSystem { null_directions: Vec<usize> },

    /// An interpolation constraint `X w = y` has no solution.
    #[error("inconsistent linear constraints: residual {residual:e} exceeds tolerance {tolerance:e}")]
    InconsistentSystem { residual: f64, tolerance: f64 },

    /// A coordinate carries no information over the whole task sequence,
    /// so a closed-form quantity that divides by its total information is
    /// undefined.
    #[error("coordinate {coordinate} has zero total information over the sequence")]
    ZeroInformation { coordinate: usize },

    /// A learning-rate schedule makes no progress or diverges in a direction
    /// with data, so it has no regularization counterpart.
    #[error("degenerate schedule in coordinate {coordinate}: {reason}")]
    DegenerateSchedule { coordinate: usize, reason: String },

    /// A scalar or structural parameter is out of its valid range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Configuration failed validation before any work began.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
