//! Simulation and metrology toolkit for a bosonic mode driven in cycles to
//! its quantum critical point.
//!
//! A single mode with quadratic Hamiltonian
//!
//! ```text
//! H(t) = w a†a - g²(t) w/4 (a + a†)²
//! ```
//!
//! loses its energy gap at the rescaled coupling g = 1. Ramping g(t) from 0
//! up to the critical point and back is necessarily non-adiabatic and leaves
//! the mode squeezed; repeating the cycle with the right timing amplifies the
//! squeezing linearly and the boson number exponentially, which in turn makes
//! the quantum Fisher information for estimating w grow exponentially with
//! protocol duration.
//!
//! The crate is organised around that pipeline:
//!
//! - [`gaussian`]: single-mode Gaussian states as 2x2 covariance matrices,
//!   with boson number, purity, squeezing decomposition and Wigner density.
//! - [`protocol`]: triangular coupling schedules and their closed-form
//!   analytics (phase matching, predicted occupation, finite-size cycle cap).
//! - [`propagator`]: fixed-step integration of the covariance equation of
//!   motion, noiseless or with thermal Lindblad dissipation.
//! - [`metrology`]: Gaussian-state quantum Fisher information for frequency
//!   estimation, its interferometric upper bound, and exponent fits.
//! - [`fock`]: an independent brute-force reference in a truncated Fock
//!   basis, used to cross-validate the covariance pipeline.

pub mod error;
pub mod fock;
pub mod gaussian;
pub mod metrology;
pub mod propagator;
pub mod protocol;

pub use error::{Error, Result};
pub use fock::FockState;
pub use gaussian::{CovarianceState, SqueezingDecomposition};
pub use metrology::{AlphaFit, CouplingConvention, MetrologyReport, QfiSettings};
pub use propagator::{CycleSample, NoiseParams, Trajectory};
pub use protocol::{PhaseMatch, ProtocolSchedule, RampShape};
