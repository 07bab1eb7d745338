use thiserror::Error;

use crate::sim::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("matrix `{0}` is not symmetric")]
    NonSymmetric(&'static str),

    #[error("matrix `{0}` is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("eigenvalue solver failed: {0}")]
    EigenFailure(String),

    #[error("plant is not stabilizable: unstable mode {re:+.6e}{im:+.6e}i is uncontrollable")]
    NotStabilizable { re: f64, im: f64 },

    #[error("Riccati solver diverged: {0}")]
    SolverDivergence(String),

    #[error("Riccati solution is indefinite (min eigenvalue {0:.3e})")]
    IndefiniteResult(f64),

    #[error("state became non-finite at t = {time}")]
    NonFiniteState {
        time: f64,
        trajectory: Box<Trajectory>,
    },

    #[error("trajectory is empty")]
    EmptyTrajectory,

    #[error("trajectory starts at zero norm; settling fraction is undefined")]
    ZeroInitialNorm,

    #[error("eigenvalues are complex ({re:.6} +/- {im:.6}i)")]
    ComplexEigenvalues { re: f64, im: f64 },

    #[error("eigenvalues are repeated ({0:.6})")]
    RepeatedEigenvalues(f64),

    #[error("zero eigenvalue")]
    ZeroEigenvalue,

    #[error("mode {0} is not controllable from the single input")]
    NotControllable(usize),

    #[error("switching function undefined: {0}")]
    DomainError(String),

    #[error("state {0:?} lies outside the recoverable region")]
    OutsideStabilityRegion([f64; 2]),

    #[error("malformed input: {0}")]
    Parse(String),
}
