//! Coupling schedules and their closed-form analytics.
//!
//! One cycle ramps the rescaled coupling from 0 up to `g_tau` in a time
//! `tau` and back down in another `tau`; `cycles` copies are concatenated
//! back to back, so the full protocol lasts T = 2 m tau. The critical point
//! sits at g = 1, where the mode's effective frequency w sqrt(1 - g²)
//! vanishes and a cycle leaves the state squeezed.
//!
//! Whether consecutive cycles add their squeezing or undo it is set by the
//! rotation accumulated per cycle. The angle advances linearly,
//! theta = nu * (w tau) + pi/2, with nu = -2 Int_0^1 sqrt(1 - g²(u)) du a
//! pure ramp-shape constant (-pi/2 for the linear ramp), so cycles add
//! coherently when w tau is an even integer.

use std::f64::consts::{FRAC_PI_2, PI, TAU as TWO_PI};

use crate::error::{Error, Result};

/// Shape of the rising half of a cycle, normalized to peak 1 at u = 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RampShape {
    #[default]
    Linear,
}

impl RampShape {
    /// Unit profile g(u) on u in [0, 1] with g(1) = 1.
    pub fn profile(self, u: f64) -> f64 {
        match self {
            RampShape::Linear => u,
        }
    }
}

/// A concatenation of `cycles` triangular coupling ramps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolSchedule {
    tau: f64,
    g_tau: f64,
    cycles: u32,
    ramp: RampShape,
}

impl ProtocolSchedule {
    pub fn new(tau: f64, g_tau: f64, cycles: u32, ramp: RampShape) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidParameter(format!("tau = {tau} must be positive")));
        }
        if !(0.0..=1.0).contains(&g_tau) {
            return Err(Error::InvalidParameter(format!(
                "g_tau = {g_tau} must lie in [0, 1]"
            )));
        }
        if cycles == 0 {
            return Err(Error::InvalidParameter("cycles must be >= 1".into()));
        }
        Ok(Self { tau, g_tau, cycles, ramp })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn g_tau(&self) -> f64 {
        self.g_tau
    }

    pub fn cycles(&self) -> u32 {
        self.cycles
    }

    pub fn ramp(&self) -> RampShape {
        self.ramp
    }

    /// Total protocol duration T = 2 m tau.
    pub fn total_duration(&self) -> f64 {
        2.0 * self.cycles as f64 * self.tau
    }

    /// Same schedule with the peak coupling replaced, as used by the
    /// frequency-perturbed runs of the Fisher-information derivative.
    ///
    /// The physical-coupling convention rescales g by sqrt(w/(w ± eps)), so
    /// a critical schedule legitimately lands a hair above 1; a slack of
    /// 1e-3 covers any sensible difference step.
    pub fn with_peak_coupling(&self, g_tau: f64) -> Result<Self> {
        if !(0.0..=1.0 + 1e-3).contains(&g_tau) {
            return Err(Error::InvalidParameter(format!(
                "peak coupling {g_tau} outside [0, 1 + 1e-3]"
            )));
        }
        Ok(Self { g_tau, ..*self })
    }

    /// Coupling g(t) for t in [0, T], periodic with period 2 tau.
    pub fn coupling_at(&self, t: f64) -> Result<f64> {
        let total = self.total_duration();
        if !t.is_finite() || t < 0.0 || t > total * (1.0 + 1e-12) {
            return Err(Error::TimeOutOfRange { t, total });
        }
        let period = 2.0 * self.tau;
        let reduced = (t - period * (t / period).floor()).min(period);
        let u = reduced / self.tau;
        let phase = if u <= 1.0 { u } else { 2.0 - u };
        Ok(self.g_tau * self.ramp.profile(phase))
    }
}

/// Fold an angle into (-pi, pi].
pub fn fold_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TWO_PI);
    if r > PI {
        r - TWO_PI
    } else {
        r
    }
}

/// Per-unit-(w tau) phase rate nu = -2 Int_0^1 sqrt(1 - g²(u)) du.
///
/// The integrand has a square-root singularity in its derivative at u = 1
/// whenever the ramp reaches the critical point, so the quadrature is
/// tanh-sinh, which converges at full double precision regardless.
pub fn ramp_phase_rate(ramp: RampShape) -> f64 {
    -2.0 * tanh_sinh_unit(|u| {
        let g = ramp.profile(u);
        (1.0 - g * g).max(0.0).sqrt()
    })
}

/// Squeezing angle predicted after one cycle, fold(nu * w tau + pi/2).
pub fn predicted_angle(omega_tau: f64, ramp: RampShape) -> f64 {
    fold_angle(ramp_phase_rate(ramp) * omega_tau + FRAC_PI_2)
}

/// Outcome of a phase-matching query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatch {
    pub matched: bool,
    /// Distance from w tau to the nearest even integer >= 2.
    pub distance: f64,
}

/// Cycles add squeezing coherently when w tau = 2 n for an integer n >= 1.
pub fn phase_match(omega_tau: f64, tolerance: f64) -> Result<PhaseMatch> {
    if !(omega_tau.is_finite() && omega_tau > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "omega_tau = {omega_tau} must be positive"
        )));
    }
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance = {tolerance} must be positive"
        )));
    }
    let n = (omega_tau / 2.0).round().max(1.0);
    let distance = (omega_tau - 2.0 * n).abs();
    Ok(PhaseMatch { matched: distance <= tolerance, distance })
}

/// Occupation expected after `m` phase-matched critical cycles starting from
/// a thermal state: N_m = ((2 N_beta + 1) cosh(m ln 3) - 1)/2.
pub fn predicted_occupation(m: u32, n_beta: f64) -> Result<f64> {
    if !n_beta.is_finite() || n_beta < 0.0 {
        return Err(Error::NegativeOccupation(n_beta));
    }
    let growth = (m as f64 * 3f64.ln()).cosh();
    Ok(0.5 * ((2.0 * n_beta + 1.0) * growth - 1.0))
}

/// Largest cycle count before a finite effective size eta spoils the
/// exponential growth: floor(log3 eta), computed on an exact integer ladder
/// so that exact powers of three are never off by one.
pub fn max_cycles(eta: f64) -> Result<u32> {
    if !(eta.is_finite() && eta > 1.0) {
        return Err(Error::InvalidParameter(format!(
            "effective size eta = {eta} must exceed 1"
        )));
    }
    let mut cap = 0u32;
    let mut power = 3.0f64;
    while power <= eta {
        cap += 1;
        power *= 3.0;
    }
    Ok(cap)
}

/// Tanh-sinh quadrature of `f` over [0, 1], refined until the level-to-level
/// change falls below ~1e-14 relative.
fn tanh_sinh_unit<F: Fn(f64) -> f64>(f: F) -> f64 {
    // t-space cutoff: beyond |t| = 4 the weights underflow to ~1e-300.
    const T_MAX: f64 = 4.0;
    let eval = |t: f64| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        let u = 0.5 * (1.0 + s.tanh());
        let w = FRAC_PI_2 * t.cosh() / s.cosh().powi(2) * 0.5;
        if w == 0.0 || !u.is_finite() {
            return 0.0;
        }
        w * f(u.clamp(0.0, 1.0))
    };

    let mut h = 1.0;
    let mut sum = eval(0.0);
    let mut k = 1;
    while (k as f64) * h <= T_MAX {
        let t = k as f64 * h;
        sum += eval(t) + eval(-t);
        k += 1;
    }
    let mut value = h * sum;

    for _ in 0..10 {
        h *= 0.5;
        // Add the odd nodes of the refined grid.
        let mut odd = 0.0;
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            let t = k as f64 * h;
            odd += eval(t) + eval(-t);
            k += 2;
        }
        let refined = 0.5 * value + h * odd;
        let converged = (refined - value).abs() <= 1e-14 * refined.abs().max(1e-300);
        value = refined;
        if converged {
            break;
        }
    }
    value
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;

    fn schedule(tau: f64, g_tau: f64, cycles: u32) -> ProtocolSchedule {
        ProtocolSchedule::new(tau, g_tau, cycles, RampShape::Linear).unwrap()
    }

    #[test]
    fn coupling_hits_ramp_landmarks_exactly() {
        let s = schedule(8.0, 1.0, 3);
        assert_eq!(s.coupling_at(4.0).unwrap(), 0.5);
        assert_eq!(s.coupling_at(8.0).unwrap(), 1.0);
        assert_eq!(s.coupling_at(16.0).unwrap(), 0.0);
        assert_eq!(s.coupling_at(24.0).unwrap(), 1.0); // second-cycle peak
        assert_eq!(s.coupling_at(0.0).unwrap(), 0.0);
        assert_eq!(s.coupling_at(s.total_duration()).unwrap(), 0.0);
    }

    #[test]
    fn coupling_rejects_times_outside_protocol() {
        let s = schedule(8.0, 1.0, 1);
        assert!(matches!(s.coupling_at(-0.5), Err(Error::TimeOutOfRange { .. })));
        assert!(matches!(s.coupling_at(16.1), Err(Error::TimeOutOfRange { .. })));
    }

    #[test]
    fn schedule_validation() {
        assert!(ProtocolSchedule::new(0.0, 1.0, 1, RampShape::Linear).is_err());
        assert!(ProtocolSchedule::new(1.0, 1.2, 1, RampShape::Linear).is_err());
        assert!(ProtocolSchedule::new(1.0, 1.0, 0, RampShape::Linear).is_err());
    }

    #[test]
    fn linear_ramp_phase_rate_is_minus_half_pi() {
        assert_abs_diff_eq!(ramp_phase_rate(RampShape::Linear), -FRAC_PI_2, epsilon = 1e-10);
    }

    #[test]
    fn predicted_angle_landmarks() {
        // w tau = 8: -4 pi + pi/2 folds back to pi/2.
        assert_abs_diff_eq!(predicted_angle(8.0, RampShape::Linear), FRAC_PI_2, epsilon = 1e-9);
        // w tau -> 0 leaves the offset pi/2.
        assert_abs_diff_eq!(predicted_angle(1e-12, RampShape::Linear), FRAC_PI_2, epsilon = 1e-9);
    }

    #[test]
    fn phase_match_landmarks() {
        let m = phase_match(8.0, 0.01).unwrap();
        assert!(m.matched);
        assert_eq!(m.distance, 0.0);
        let m = phase_match(9.0, 0.01).unwrap();
        assert!(!m.matched);
        assert_eq!(m.distance, 1.0);
        let m = phase_match(8.2, 0.01).unwrap();
        assert!(!m.matched);
        assert_abs_diff_eq!(m.distance, 0.2, epsilon = 1e-12);
        // Below the first matched point the distance runs to w tau = 2.
        let m = phase_match(0.5, 0.01).unwrap();
        assert_abs_diff_eq!(m.distance, 1.5, epsilon = 1e-12);
        assert!(phase_match(-1.0, 0.01).is_err());
        assert!(phase_match(8.0, 0.0).is_err());
    }

    #[test]
    fn predicted_occupation_landmarks() {
        assert_relative_eq!(predicted_occupation(1, 0.0).unwrap(), 1.0 / 3.0, max_relative = 1e-14);
        assert_relative_eq!(predicted_occupation(2, 0.0).unwrap(), 16.0 / 9.0, max_relative = 1e-14);
        assert_abs_diff_eq!(predicted_occupation(0, 2.7).unwrap(), 2.7, epsilon = 1e-14);
        assert!(predicted_occupation(1, -1.0).is_err());
    }

    #[test]
    fn max_cycles_landmarks() {
        assert_eq!(max_cycles(3f64.powi(7)).unwrap(), 7);
        assert_eq!(max_cycles(1e6).unwrap(), 12);
        assert_eq!(max_cycles(2.0).unwrap(), 0);
        assert!(max_cycles(1.0).is_err());
        assert!(max_cycles(0.5).is_err());
    }

    #[test]
    fn max_cycles_exact_on_powers_of_three() {
        for k in 1..=20u32 {
            assert_eq!(max_cycles(3f64.powi(k as i32)).unwrap(), k, "k = {k}");
        }
    }

    #[test]
    fn tanh_sinh_handles_smooth_and_singular_integrands() {
        assert_abs_diff_eq!(tanh_sinh_unit(|u| u * u), 1.0 / 3.0, epsilon = 1e-13);
        // sqrt endpoint singularity: Int_0^1 sqrt(1 - u) du = 2/3.
        assert_abs_diff_eq!(tanh_sinh_unit(|u| (1.0 - u).sqrt()), 2.0 / 3.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn coupling_is_periodic_on_dyadic_grid(num in 0u32..4096, k in 0u32..8) {
            // Dyadic times keep t + 2 tau k exact, so periodicity is exact.
            let s = schedule(8.0, 1.0, 16);
            let t = num as f64 * (16.0 / 4096.0);
            let shifted = t + 16.0 * k as f64;
            prop_assert_eq!(
                s.coupling_at(t).unwrap(),
                s.coupling_at(shifted).unwrap()
            );
        }

        #[test]
        fn coupling_is_lipschitz(t in 0.0..16.0f64, h in 1e-9..0.5f64) {
            let s = schedule(8.0, 0.7, 1);
            let t2 = (t + h).min(s.total_duration());
            let dg = (s.coupling_at(t2).unwrap() - s.coupling_at(t).unwrap()).abs();
            prop_assert!(dg <= (s.g_tau() / s.tau()) * (t2 - t) + 1e-12);
        }

        #[test]
        fn predicted_angle_is_affine_before_folding(a in 0.1..50.0f64, b in 0.1..50.0f64) {
            let nu = ramp_phase_rate(RampShape::Linear);
            let raw = |wt: f64| nu * wt + FRAC_PI_2;
            prop_assert!((raw(a) + raw(b) - FRAC_PI_2 - raw(a + b)).abs() <= 1e-10);
        }

        #[test]
        fn even_integers_always_phase_match(n in 1u32..1_000_000, tol in 1e-12..1.0f64) {
            let m = phase_match(2.0 * n as f64, tol).unwrap();
            prop_assert!(m.matched);
            prop_assert_eq!(m.distance, 0.0);
        }

        #[test]
        fn predicted_occupation_matches_sinh_form(m in 0u32..30) {
            let direct = predicted_occupation(m, 0.0).unwrap();
            let sinh_form = f64::sinh(m as f64 * 3f64.ln() / 2.0).powi(2);
            prop_assert!((direct - sinh_form).abs() <= 1e-12 * direct.max(1.0));
        }

        #[test]
        fn fold_angle_lands_in_half_open_interval(theta in -1e3..1e3f64) {
            let f = fold_angle(theta);
            prop_assert!(f > -PI && f <= PI);
        }
    }
}
