//! Error type shared across the crate.

use thiserror::Error;

/// Failures surfaced by estimation, nuisance fitting and the study harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty sample")]
    EmptySample,

    /// All observations equal; no spread to build a bandwidth from.
    #[error("degenerate sample")]
    DegenerateSample,

    #[error("quantile level must lie strictly inside (0,1), got {0}")]
    InvalidLevel(f64),

    #[error("confidence level must lie strictly inside (0,1), got {0}")]
    InvalidConfidence(f64),

    #[error("invalid fold count: K={k} with n={n} (need 2 <= K <= n)")]
    InvalidFoldCount { k: usize, n: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// The one-step update divides by the density estimate; refuse to divide
    /// by something indistinguishable from zero.
    #[error("density floor violated: {value:e} < {floor:e}")]
    DensityFloor { value: f64, floor: f64 },

    #[error("variance undefined")]
    VarianceUndefined,

    #[error("imputation mismatch: {0}")]
    ImputationMismatch(String),

    #[error("strategy fit failed on fold {fold}: {source}")]
    StrategyFit { fold: usize, source: Box<Error> },

    #[error("empty neighborhood")]
    EmptyNeighborhood,

    #[error("bandwidth selection failed")]
    BandwidthSelection,

    #[error("separation detected")]
    Separation,

    #[error("singular design")]
    SingularDesign,

    #[error("zero-variance covariate at column {0}")]
    ZeroVarianceCovariate(usize),

    #[error("singular covariance")]
    SingularCovariance,

    /// A dimension-reduction step produced an all-zero direction; callers must
    /// decide how to proceed, so this is an error rather than a silent pass.
    #[error("zero direction from {0}")]
    ZeroDirection(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Wrap an error with the index of the cross-fitting fold it occurred in.
    pub fn in_fold(self, fold: usize) -> Error {
        Error::StrategyFit {
            fold,
            source: Box::new(self),
        }
    }
}
