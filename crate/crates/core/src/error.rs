use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),

    #[error("partition too large: {cells} cells exceeds the limit of {limit}")]
    PartitionTooLarge { cells: f64, limit: u64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("cover violation: point {0:?} is not within the radius of any center")]
    CoverViolation(Vec<f64>),

    #[error("point {0:?} lies outside the declared space")]
    OutOfSpace(Vec<f64>),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("certificate inapplicable: {0}")]
    CertificateInapplicable(String),

    #[error("probe estimator unavailable: {0}")]
    EstimatorUnavailable(String),

    #[error("wrong bound for this certificate: {0}")]
    WrongTheorem(String),

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("no Doeblin minorization found for T <= {t_max}")]
    NotDoeblin { t_max: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate classifier: {0}")]
    DegenerateClassifier(String),
}

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
