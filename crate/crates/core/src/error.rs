use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("rank deficient {what}: smallest singular value {smallest:e} vs largest {largest:e}")]
    RankDeficient {
        what: &'static str,
        smallest: f64,
        largest: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("degenerate observation: residual sum of squares is zero")]
    DegenerateObservation,

    #[error("unsupported: {0}")]
    Unsupported(&'static str),

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(&'static str),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("unreliable normalization: effective sample size {ess:.1} below 5% of {n_samples} samples")]
    UnreliableNormalization { ess: f64, n_samples: usize },

    #[error("density has no normalization certificate")]
    MissingNormalization,

    #[error("values must be sorted in nonincreasing order: {0}")]
    Unsorted(&'static str),

    #[error("too many failed replications: {excluded} of {total} excluded (ceiling 1%)")]
    ExclusionCeiling { excluded: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),
}
