use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the estimators, loaders and simulation harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("moment matrix is rank deficient: rank {rank} < {required} parameters (relevance condition fails)")]
    RankDeficient { rank: usize, required: usize },

    #[error("non-finite value in {0}")]
    NonFiniteInput(&'static str),

    #[error("estimated moment covariance has rank {rank} < {required} parameters")]
    OmegaSingular { rank: usize, required: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NonSymmetric(f64),

    #[error("model spec does not match data: {0}")]
    SpecMismatch(String),

    #[error("treated share {0} is degenerate (must lie strictly between 0 and 1)")]
    DegeneratePi(f64),

    #[error("period {0} is not available for this estimator")]
    BadPeriod(usize),

    #[error("denominator {0} is numerically zero (relevance fails)")]
    ZeroDenominator(&'static str),

    #[error("no untreated units with W = {0}")]
    MissingWCell(u8),

    #[error("period {0} has no observations")]
    EmptyPeriod(usize),

    #[error("no observations with D = {d} in period {t}")]
    EmptyCell { d: u8, t: usize },

    #[error("estimator requires at least four periods, got {0}")]
    NeedsFourPeriods(usize),

    #[error("{failed} of {total} bootstrap replications failed")]
    TooManyFailures { failed: usize, total: usize },

    #[error("no pre-treatment periods available (first treatment period is 3)")]
    NoPrePeriods,

    #[error("unbalanced panel: units {0:?} are missing periods")]
    UnbalancedPanel(Vec<String>),

    #[error("column `{column}` varies over time for unit {unit}")]
    NonConstantCovariate { unit: String, column: String },

    #[error("bad period labels: {0}")]
    BadPeriodLabels(String),

    #[error("group {group} has {size} treated units, fewer than the minimum {min}")]
    GroupTooSmall { group: usize, size: usize, min: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by malformed input rather than a failed estimation.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteInput(_)
                | Error::DimensionMismatch(_)
                | Error::NonSymmetric(_)
                | Error::SpecMismatch(_)
                | Error::BadPeriod(_)
                | Error::EmptyPeriod(_)
                | Error::EmptyCell { .. }
                | Error::NeedsFourPeriods(_)
                | Error::NoPrePeriods
                | Error::UnbalancedPanel(_)
                | Error::NonConstantCovariate { .. }
                | Error::BadPeriodLabels(_)
                | Error::GroupTooSmall { .. }
                | Error::InvalidData(_)
                | Error::InvalidArgument(_)
                | Error::Io(_)
                | Error::MissingWCell(_)
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::InvalidData(e.to_string())
    }
}
