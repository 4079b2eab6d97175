use thiserror::Error;

/// Errors raised by the numerical kernels and the influence pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("matrix is singular")]
    Singular,

    #[error("conjugate gradients did not converge (relative residual {0:e})")]
    NoConvergence(f64),

    #[error("no stabilizing DARE solution: {0}")]
    NoStabilizingSolution(String),

    #[error("closed loop is not stable (spectral radius {0})")]
    UnstableClosedLoop(f64),

    #[error("index {index} out of range for {len} trajectories")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("trajectory {0} holds every transition of the dataset")]
    DominantTrajectory(usize),

    #[error("leave-one-out refit needs at least two trajectories")]
    SingleTrajectory,

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("invalid k = {k} for {len} entries")]
    InvalidK { k: usize, len: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
}

pub type Result<T> = std::result::Result<T, Error>;
