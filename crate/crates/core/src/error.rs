use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HaftError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("rank-deficient design: columns {columns:?} are linearly dependent on earlier columns")]
    RankDeficient { columns: Vec<String> },

    #[error("likelihood is unbounded: {0}")]
    UnboundedLikelihood(String),

    #[error("estimation impossible: {0}")]
    Estimation(String),

    #[error("quadrature did not reach tolerance: estimate {estimate}, error estimate {error}")]
    Quadrature { estimate: f64, error: f64 },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unknown column `{0}`")]
    UnknownColumn(String),

    #[error("invalid covariate specification: {0}")]
    InvalidSpec(String),

    #[error("too few observations: need at least {needed}, got {got}")]
    TooFewObservations { needed: usize, got: usize },

    #[error("unavailable: {0}")]
    Unavailable(String),

    #[error("usage error: {0}")]
    Usage(String),
}

pub type Result<T, E = HaftError> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(HaftError::DimensionMismatch {
            context,
            expected,
            found,
        })
    }
}
