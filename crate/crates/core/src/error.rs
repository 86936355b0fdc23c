use thiserror::Error;

use crate::model::MeanFieldState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// The steady-state reduction needs a finite `beta`, i.e. `lambda > 0`.
    #[error("repump rate lambda must be positive for the steady-state reduction")]
    LambdaZero,

    #[error("transmittance is undefined for a zero cavity drive")]
    EmptyDrive,

    #[error("no non-negative saturation root found (internal solver failure): {0}")]
    NoRoot(String),

    #[error("root s = {s:e} does not reconstruct a fixed point (residual {residual:e})")]
    Reconstruction { s: f64, residual: f64 },

    #[error("eigenvalue computation did not converge")]
    Eigen,

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    Stiffness {
        t: f64,
        h: f64,
        state: Box<MeanFieldState>,
    },

    #[error("population invariant violated at t = {t:e}: {state:?}")]
    NegativePopulation { t: f64, state: Box<MeanFieldState> },

    #[error("population of |f> at window start is too small to calibrate lambda")]
    InsufficientPopulation,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
