use thiserror::Error;

/// Errors raised by model construction, fitting and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("objective is not finite at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("majorization not reached after {inflations} inflations at iteration {iteration} (phi = {phi:e})")]
    InflationLimit {
        iteration: usize,
        inflations: usize,
        phi: f64,
    },

    #[error("regularization path failed at lambda index {index}: {source}")]
    Path {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cross-validation fold {fold} failed: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("replication {index} failed: {source}")]
    Replication {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("block coordinate descent did not converge within {max_cycles} cycles (last change {change:e})")]
    CycleLimit { max_cycles: usize, change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
