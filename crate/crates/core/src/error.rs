//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not symmetric: |R01 - R10| = {0:.3e}")]
    Asymmetric(f64),

    #[error("unphysical covariance matrix: det(R) = {det} < {min}")]
    Unphysical { det: f64, min: f64 },

    #[error("occupation {0:.3e} below zero beyond tolerance")]
    NegativeOccupation(f64),

    #[error("time {t} outside the protocol range [0, {total}]")]
    TimeOutOfRange { t: f64, total: f64 },

    #[error("integration step {step:.3e} exceeds the allowed maximum {max:.3e}")]
    StepTooLarge { step: f64, max: f64 },

    #[error("non-finite state encountered at t = {t}")]
    NonFinite { t: f64 },

    #[error("fit window [{lo}, {hi}] needs at least two cycles inside 1..={cycles}")]
    WindowOutOfRange { lo: u32, hi: u32, cycles: u32 },

    #[error("non-positive value inside the fit window; log fit undefined")]
    NonPositiveFit,

    #[error("Fisher information {i_omega:.6e} exceeds its bound {bound:.6e} at cycle {cycle}")]
    BoundViolated { cycle: u32, i_omega: f64, bound: f64 },

    #[error("Fock dimension {0} too small (minimum {1})")]
    DimensionTooSmall(usize, usize),

    #[error("Fock dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    #[error(
        "Fock evolution not converged: tail occupation {tail:.3e}; \
         retry with dim >= {suggested}"
    )]
    NotConverged { tail: f64, suggested: usize },

    #[error("{quantity} drifted by {drift:.3e} during Fock evolution")]
    ConservationViolated { quantity: &'static str, drift: f64 },

    #[error("density matrix eigenvalue {0:.3e} below tolerance")]
    NegativeEigenvalue(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
