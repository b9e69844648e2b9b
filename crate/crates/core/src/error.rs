//! Crate-wide error type.
//!
//! Errors fall into two broad classes that callers (in particular the CLI)
//! may want to distinguish: problems with the *input* (malformed documents,
//! out-of-range arguments, inconsistent dimensions) and *numerical* failures
//! that arise while computing (diverging fits, overflowing risk surfaces,
//! covariance matrices that are not positive semi-definite).

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    // ----- input / validation errors -----
    #[error("factor count {0} is out of range (supported: 2..={max})", max = crate::factors::MAX_FACTORS)]
    FactorCount(usize),

    #[error("invalid factor label {label:?}: {reason}")]
    FactorLabel { label: String, reason: String },

    #[error("duplicate factor label {0:?}")]
    DuplicateFactor(String),

    #[error("unknown factor label {0:?}")]
    UnknownFactor(String),

    #[error("factor index {0} is out of range for {1} factors")]
    FactorIndex(usize, usize),

    #[error("invalid coefficient label {label:?}: {reason}")]
    CoefficientLabel { label: String, reason: String },

    #[error("duplicate coefficient entry for subset {0:?}")]
    DuplicateSubset(String),

    #[error("coefficient for {0:?} is not finite")]
    NonFiniteCoefficient(String),

    #[error("coefficient table is not saturated: no value for {missing:?} (and possibly more); supply all product terms or opt in to zero-defaults")]
    NotSaturated { missing: String },

    #[error("invalid risk surface: {0}")]
    InvalidSurface(String),

    #[error("invalid conditioning: {0}")]
    InvalidConditioning(String),

    #[error("invalid covariance matrix: {0}")]
    Covariance(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("could not parse input document: {0}")]
    Parse(String),

    #[error("data table error: {0}")]
    Data(String),

    #[error("simulation spec error: {0}")]
    Simulation(String),

    // ----- numerical failures -----
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("model fit failed: perfect separation suspected (coefficient for {column:?} diverged)")]
    Separation { column: String },

    #[error("model fit failed: design matrix is rank deficient at column {column:?}")]
    RankDeficient { column: String },
}

impl Error {
    /// True for failures of the computation itself (as opposed to bad input).
    /// The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_) | Error::Separation { .. } | Error::RankDeficient { .. }
        )
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
