//! Single-mode Gaussian states and their derived observables.
//!
//! A zero-mean Gaussian state of one bosonic mode is fully determined by the
//! 2x2 covariance matrix of the quadratures x = a + a† and p = i(a† - a),
//!
//! ```text
//! R_ij = <X_i X_j + X_j X_i>/2 - <X_i><X_j>,   X = (x, p).
//! ```
//!
//! In this convention the vacuum has R = I, a thermal state with mean
//! occupation n has R = (2n + 1) I, the boson number is N = (Tr R - 2)/4 and
//! the purity is P = det(R)^(-1/2). The Heisenberg inequality reads
//! det(R) >= 1.
//!
//! Every state can be written as a rotated squeezed thermal state: the
//! eigenvalues of R are (2n_k + 1) e^(±2|s|) and the eigenvector of the
//! smaller one points along the squeezing axis. `squeezing` extracts that
//! decomposition in closed form; `SqueezingDecomposition::reconstruct`
//! inverts it.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};

/// Allowed asymmetry |R01 - R10| when validating a covariance matrix.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Physicality bound applied at construction: det(R) >= 1 - STRICT_DET_TOL.
pub const STRICT_DET_TOL: f64 = 1e-9;
/// Looser guard used by derived observables on long-evolved states.
pub const OPERATIONAL_DET_TOL: f64 = 1e-6;
/// Below this eigenvalue splitting the squeezing axis is undefined and the
/// angle is reported as 0.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// det([[a, c], [c, b]]) = a*b - c*c with a compensated product difference.
///
/// The plain expression loses ~cond(R)*eps digits for strongly squeezed
/// states (cond(R) = e^(4|s|)); the two fused multiply-adds recover the
/// rounding error of each product and keep the result accurate to ~1 ulp.
pub(crate) fn det_sym2(a: f64, c: f64, b: f64) -> f64 {
    let w = c * c;
    let e = f64::mul_add(c, c, -w);
    f64::mul_add(a, b, -w) - e
}

/// A single-mode Gaussian state: covariance matrix plus first moments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceState {
    r: Matrix2<f64>,
    mean: Vector2<f64>,
}

impl CovarianceState {
    /// Validates symmetry (to [`SYMMETRY_TOL`]) and physicality
    /// (det >= 1 - [`STRICT_DET_TOL`]), then stores the symmetrized matrix.
    pub fn new(r: Matrix2<f64>, mean: Vector2<f64>) -> Result<Self> {
        if !(r.iter().all(|v| v.is_finite()) && mean.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFinite { t: f64::NAN });
        }
        let asym = (r[(0, 1)] - r[(1, 0)]).abs();
        if asym > SYMMETRY_TOL {
            return Err(Error::Asymmetric(asym));
        }
        let c = 0.5 * (r[(0, 1)] + r[(1, 0)]);
        let det = det_sym2(r[(0, 0)], c, r[(1, 1)]);
        if det < 1.0 - STRICT_DET_TOL {
            return Err(Error::Unphysical { det, min: 1.0 - STRICT_DET_TOL });
        }
        Ok(Self {
            r: Matrix2::new(r[(0, 0)], c, c, r[(1, 1)]),
            mean,
        })
    }

    /// Zero-mean state from the three independent matrix entries.
    pub fn from_variances(r00: f64, r01: f64, r11: f64) -> Result<Self> {
        Self::new(Matrix2::new(r00, r01, r01, r11), Vector2::zeros())
    }

    /// Integrator-facing constructor: symmetric by construction, checked
    /// against the looser [`OPERATIONAL_DET_TOL`] so that sub-ulp determinant
    /// drift on long critical runs does not abort a trajectory.
    pub(crate) fn from_integrator(r00: f64, r01: f64, r11: f64, t: f64) -> Result<Self> {
        if !(r00.is_finite() && r01.is_finite() && r11.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        let det = det_sym2(r00, r01, r11);
        if det < 1.0 - OPERATIONAL_DET_TOL {
            return Err(Error::Unphysical { det, min: 1.0 - OPERATIONAL_DET_TOL });
        }
        Ok(Self {
            r: Matrix2::new(r00, r01, r01, r11),
            mean: Vector2::zeros(),
        })
    }

    /// The vacuum: R = I, zero mean.
    pub fn vacuum() -> Self {
        Self { r: Matrix2::identity(), mean: Vector2::zeros() }
    }

    /// Thermal state with mean occupation `n_beta`: R = (2 n_beta + 1) I.
    pub fn thermal(n_beta: f64) -> Result<Self> {
        if !n_beta.is_finite() || n_beta < 0.0 {
            return Err(Error::NegativeOccupation(n_beta));
        }
        Ok(Self {
            r: Matrix2::identity() * (2.0 * n_beta + 1.0),
            mean: Vector2::zeros(),
        })
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.r
    }

    pub fn mean(&self) -> Vector2<f64> {
        self.mean
    }

    /// Compensated determinant of the covariance matrix.
    pub fn det(&self) -> f64 {
        det_sym2(self.r[(0, 0)], self.r[(0, 1)], self.r[(1, 1)])
    }

    fn guard_operational(&self) -> Result<f64> {
        let det = self.det();
        if det < 1.0 - OPERATIONAL_DET_TOL {
            return Err(Error::Unphysical { det, min: 1.0 - OPERATIONAL_DET_TOL });
        }
        Ok(det)
    }

    /// Mean boson number N = (Tr R - 2)/4 (+ |<X>|²/4 for displaced states).
    ///
    /// Values in [-1e-9, 0] are clamped to 0; anything lower is rejected.
    pub fn boson_number(&self) -> Result<f64> {
        self.guard_operational()?;
        let n = (self.r.trace() - 2.0) / 4.0 + self.mean.norm_squared() / 4.0;
        if n < -1e-9 {
            return Err(Error::NegativeOccupation(n));
        }
        Ok(n.max(0.0))
    }

    /// Purity P = det(R)^(-1/2), clamped so that determinant round-off on
    /// pure states cannot report P > 1.
    pub fn purity(&self) -> Result<f64> {
        let det = self.guard_operational()?;
        if (1.0 - STRICT_DET_TOL..=1.0).contains(&det) {
            return Ok(1.0);
        }
        Ok(det.powf(-0.5).min(1.0))
    }

    /// Squeezed-thermal decomposition of the covariance matrix.
    ///
    /// The angle is twice the polar angle of the minor-axis (squeezed)
    /// eigenvector, with the eigenvector sign fixed by v_x >= 0 (and v_y > 0
    /// when v_x = 0), so theta lies in (-pi, pi]. A degenerate (isotropic)
    /// matrix reports theta = 0.
    pub fn squeezing(&self) -> SqueezingDecomposition {
        let (a, c, b) = (self.r[(0, 0)], self.r[(0, 1)], self.r[(1, 1)]);
        let mid = 0.5 * (a + b);
        let disc = f64::hypot(0.5 * (a - b), c);
        let lmin = mid - disc;
        let lmax = mid + disc;
        let n_kappa = 0.5 * (self.det().max(0.0).sqrt() - 1.0).max(0.0);
        if 2.0 * disc < DEGENERACY_TOL {
            return SqueezingDecomposition { s_mag: 0.0, theta: 0.0, n_kappa };
        }
        let s_mag = 0.25 * (lmax / lmin).ln();
        // Minor-axis eigenvector: (R - lmin I) v = 0 has the two algebraic
        // solutions below; pick the better-conditioned one.
        let v1 = Vector2::new(c, lmin - a);
        let v2 = Vector2::new(lmin - b, c);
        let mut v = if v1.norm_squared() >= v2.norm_squared() { v1 } else { v2 };
        v /= v.norm();
        if v.x < 0.0 || (v.x == 0.0 && v.y < 0.0) {
            v = -v;
        }
        SqueezingDecomposition {
            s_mag,
            theta: 2.0 * v.y.atan2(v.x),
            n_kappa,
        }
    }

    /// Wigner density at a phase-space point,
    /// W(X) = P/(2 pi) exp(-(X - <X>)ᵀ R⁻¹ (X - <X>)).
    ///
    /// The quadratures carry twice the vacuum width in this convention, so
    /// the density integrates to 1/2 over dx dp; normalization checks carry
    /// the compensating factor 2.
    pub fn wigner_at(&self, point: Vector2<f64>) -> Result<f64> {
        let det = self.guard_operational()?;
        let purity = self.purity()?;
        let d = point - self.mean;
        let quad = (self.r[(1, 1)] * d.x * d.x - 2.0 * self.r[(0, 1)] * d.x * d.y
            + self.r[(0, 0)] * d.y * d.y)
            / det;
        Ok(purity / (2.0 * std::f64::consts::PI) * (-quad).exp())
    }

    /// Phase-space rotation by `angle`: R -> Rot R Rotᵀ, <X> -> Rot <X>.
    pub fn rotated(&self, angle: f64) -> Self {
        let (sin, cos) = angle.sin_cos();
        let rot = Matrix2::new(cos, -sin, sin, cos);
        Self {
            r: rot * self.r * rot.transpose(),
            mean: rot * self.mean,
        }
    }
}

/// Squeezed-thermal parameters of a covariance matrix: eigenvalues
/// (2 n_kappa + 1) e^(±2 s_mag), minor axis at polar angle theta/2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqueezingDecomposition {
    /// Squeezing magnitude |s| >= 0.
    pub s_mag: f64,
    /// Squeezing angle in (-pi, pi].
    pub theta: f64,
    /// Thermal occupancy n_kappa = (sqrt(det R) - 1)/2 >= 0.
    pub n_kappa: f64,
}

impl SqueezingDecomposition {
    /// Rebuild the covariance state this decomposition came from.
    pub fn reconstruct(&self) -> Result<CovarianceState> {
        if self.s_mag < 0.0 || self.n_kappa < 0.0 || !self.theta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "invalid squeezing decomposition: {self:?}"
            )));
        }
        let scale = 2.0 * self.n_kappa + 1.0;
        let lmin = scale * (-2.0 * self.s_mag).exp();
        let lmax = scale * (2.0 * self.s_mag).exp();
        let (sin, cos) = (0.5 * self.theta).sin_cos();
        CovarianceState::from_variances(
            lmin * cos * cos + lmax * sin * sin,
            (lmin - lmax) * sin * cos,
            lmin * sin * sin + lmax * cos * cos,
        )
    }
}
