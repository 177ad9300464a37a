use thiserror::Error;

/// Errors produced by the estimation and simulation routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix is not positive definite (pivot {index} = {pivot:e})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("solver did not converge after {iterations} iterations (max delta {max_delta:e})")]
    NotConverged { iterations: usize, max_delta: f64 },

    #[error("column {column}: {source}")]
    Column {
        column: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid estimate: {0}")]
    InvalidEstimate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model construction failed: {0}")]
    Model(String),

    #[error("replication {replication} (seed {seed}): {source}")]
    Replication {
        replication: usize,
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for failures of the numerical routines themselves, as opposed
    /// to malformed inputs or configurations.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::NotPositiveDefinite { .. }
            | Error::NonFinite { .. }
            | Error::DegenerateFit(_)
            | Error::NotConverged { .. }
            | Error::InvalidEstimate(_) => true,
            Error::Column { source, .. } | Error::Replication { source, .. } => source.is_numeric(),
            Error::Domain(_) | Error::Dimension(_) | Error::Config(_) | Error::Model(_) => false,
        }
    }

    pub(crate) fn in_column(self, column: usize) -> Self {
        Error::Column {
            column,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
