use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid set: {0}")]
    InvalidSet(String),

    #[error("constraint set could not be certified nonempty: {0}")]
    EmptySet(String),

    #[error("projection did not converge after {iterations} cycles (displacement {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("no convergence within {max_nu} communication rounds")]
    NoConvergence { max_nu: usize },

    #[error("agent index {index} out of range for a population of {population}")]
    AgentOutOfRange { index: usize, population: usize },

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("deviation problem is not strictly convex (minimum eigenvalue {0:e})")]
    Nonconvex(f64),

    #[error("instance too large for the grid oracle: {0}")]
    TooLarge(String),

    #[error("no pure grid equilibrium found: {0}")]
    NoGridEquilibrium(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
