//! Frequency-estimation metrology on simulated trajectories.
//!
//! For a zero-mean Gaussian state the quantum Fisher information for a
//! parameter encoded in the covariance matrix is
//!
//! ```text
//! I = Tr[(R⁻¹ ∂R)²] / (2 (1 + P²)) + 2 (∂P)² / (1 - P⁴),
//! ```
//!
//! with P the purity. The derivatives with respect to the mode frequency w
//! are taken by central differences between two trajectories integrated at
//! w ± eps. The second term is the 0/0 limit of a pure state when kappa = 0
//! (unitary flows preserve P exactly, so ∂P vanishes identically) and is
//! dropped there and on the P > 1 - 1e-9 branch.
//!
//! An active-interferometry bound caps the Fisher information in terms of
//! the occupation history alone,
//!
//! ```text
//! I_B = 4 [ Int_0^T (2 N(t) + 1) dt ]²,
//! ```
//!
//! and for phase-matched critical cycles its large-m form is
//! 4 tau² 3^(2m). Exponential prefactors alpha with Q ∝ 3^(alpha m) are
//! extracted by ordinary least squares of log3 Q against the cycle index.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gaussian::CovarianceState;
use crate::propagator::{self, NoiseParams, Trajectory};
use crate::protocol::ProtocolSchedule;

/// What is held fixed while the frequency is perturbed.
///
/// The critical coupling of the underlying models scales as sqrt(w), so at
/// fixed physical coupling the rescaled g inherits a 1/sqrt(w) dependence;
/// that is the default and the convention behind every quoted number.
/// `FixedRescaled` (g unchanged) is provided for comparison only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingConvention {
    #[default]
    FixedPhysical,
    FixedRescaled,
}

/// Peak coupling to use when integrating at a perturbed frequency.
pub fn perturbed_peak_coupling(
    g_tau: f64,
    omega: f64,
    omega_perturbed: f64,
    convention: CouplingConvention,
) -> f64 {
    match convention {
        CouplingConvention::FixedPhysical => g_tau * (omega / omega_perturbed).sqrt(),
        CouplingConvention::FixedRescaled => g_tau,
    }
}

/// Knobs of the Fisher-information estimate.
#[derive(Debug, Clone, Copy)]
pub struct QfiSettings {
    /// Relative half-width of the central difference: eps = eps_rel * w.
    pub eps_rel: f64,
    pub convention: CouplingConvention,
    /// Integration step; `None` uses [`propagator::default_step`].
    pub max_step: Option<f64>,
}

impl Default for QfiSettings {
    fn default() -> Self {
        Self {
            eps_rel: 1e-8,
            convention: CouplingConvention::FixedPhysical,
            max_step: None,
        }
    }
}

impl QfiSettings {
    fn step(&self, schedule: &ProtocolSchedule, omega: f64) -> f64 {
        self.max_step
            .unwrap_or_else(|| propagator::default_step(schedule.tau(), omega))
    }
}

/// Fisher information per cycle together with the unperturbed trajectory it
/// was computed from.
#[derive(Debug)]
pub struct FrequencyQfi {
    pub i_omega: Vec<f64>,
    pub center: Trajectory,
}

/// Quantum Fisher information for estimating w, one value per completed
/// cycle.
pub fn qfi_frequency(
    initial: &CovarianceState,
    schedule: &ProtocolSchedule,
    omega: f64,
    noise: &NoiseParams,
    settings: &QfiSettings,
) -> Result<Vec<f64>> {
    qfi_frequency_full(initial, schedule, omega, noise, settings).map(|d| d.i_omega)
}

/// As [`qfi_frequency`], but also hands back the unperturbed trajectory so
/// callers can derive N(t), the bound and per-cycle records without
/// re-integrating.
pub fn qfi_frequency_full(
    initial: &CovarianceState,
    schedule: &ProtocolSchedule,
    omega: f64,
    noise: &NoiseParams,
    settings: &QfiSettings,
) -> Result<FrequencyQfi> {
    if !(settings.eps_rel.is_finite() && settings.eps_rel > 0.0 && settings.eps_rel < 1e-2) {
        return Err(Error::InvalidParameter(format!(
            "eps_rel = {} must lie in (0, 1e-2)",
            settings.eps_rel
        )));
    }
    let eps = settings.eps_rel * omega;
    let step = settings.step(schedule, omega);

    let run = |w: f64| -> Result<Trajectory> {
        let g = perturbed_peak_coupling(schedule.g_tau(), omega, w, settings.convention);
        let perturbed = schedule.with_peak_coupling(g)?;
        propagator::evolve(initial, &perturbed, w, noise, step)
    };

    // The three integrations are independent; the perturbed pair runs
    // concurrently with the unperturbed one.
    let (center, pair) = rayon::join(
        || run(omega),
        || rayon::join(|| run(omega + eps), || run(omega - eps)),
    );
    let (center, plus, minus) = (center?, pair.0?, pair.1?);

    let boundaries = center.cycle_boundary_indices();
    let mut i_omega = Vec::with_capacity(boundaries.len());
    for (&idx, cycle) in boundaries.iter().zip(1u32..) {
        let rc = center.states()[idx].matrix();
        let rp = plus.states()[idx].matrix();
        let rm = minus.states()[idx].matrix();
        let dr = (rp - rm) / (2.0 * eps);

        let det = center.states()[idx].det();
        // Adjugate inverse of the symmetric 2x2.
        let (i00, i01, i11) = (rc[(1, 1)] / det, -rc[(0, 1)] / det, rc[(0, 0)] / det);
        let a00 = i00 * dr[(0, 0)] + i01 * dr[(0, 1)];
        let a01 = i00 * dr[(0, 1)] + i01 * dr[(1, 1)];
        let a10 = i01 * dr[(0, 0)] + i11 * dr[(0, 1)];
        let a11 = i01 * dr[(0, 1)] + i11 * dr[(1, 1)];
        let tr_a2 = a00 * a00 + 2.0 * a01 * a10 + a11 * a11;

        let purity = center.states()[idx].purity()?;
        let mut value = 0.5 * tr_a2 / (1.0 + purity * purity);
        // Unitary evolution preserves the purity exactly, so the (∂P)² term
        // is identically zero at kappa = 0; evaluating it there would divide
        // integrator round-off by 1 - P⁴ ~ 0.
        if !noise.is_noiseless() && purity < 1.0 - 1e-9 {
            let pp = plus.states()[idx].purity()?;
            let pm = minus.states()[idx].purity()?;
            let dp = (pp - pm) / (2.0 * eps);
            value += 2.0 * dp * dp / (1.0 - purity.powi(4));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { t: center.times()[idx] });
        }
        let _ = cycle;
        i_omega.push(value.max(0.0));
    }
    Ok(FrequencyQfi { i_omega, center })
}

/// Largest relative change of the per-cycle Fisher information when the
/// difference step shrinks to eps/10; large values flag an ill-chosen eps.
pub fn qfi_eps_sensitivity(
    initial: &CovarianceState,
    schedule: &ProtocolSchedule,
    omega: f64,
    noise: &NoiseParams,
    settings: &QfiSettings,
) -> Result<f64> {
    let base = qfi_frequency(initial, schedule, omega, noise, settings)?;
    let finer = qfi_frequency(
        initial,
        schedule,
        omega,
        noise,
        &QfiSettings { eps_rel: settings.eps_rel / 10.0, ..*settings },
    )?;
    Ok(base
        .iter()
        .zip(&finer)
        .filter(|(b, _)| **b > 0.0)
        .map(|(b, f)| ((b - f) / b).abs())
        .fold(0.0, f64::max))
}

/// Interferometric bound 4 [Int_0^t (2 N + 1) dt']² at every grid point,
/// with trapezoidal quadrature on the trajectory grid.
pub fn qfi_bound_profile(trajectory: &Trajectory) -> Result<Vec<f64>> {
    let n = trajectory.boson_numbers()?;
    let times = trajectory.times();
    let mut out = Vec::with_capacity(n.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..n.len() {
        let dt = times[i] - times[i - 1];
        acc += 0.5 * dt * ((2.0 * n[i - 1] + 1.0) + (2.0 * n[i] + 1.0));
        out.push(4.0 * acc * acc);
    }
    Ok(out)
}

/// Interferometric bound on the Fisher information, one value per cycle:
/// [`qfi_bound_profile`] read at the cycle boundaries.
pub fn qfi_bound(trajectory: &Trajectory) -> Result<Vec<f64>> {
    let profile = qfi_bound_profile(trajectory)?;
    Ok(trajectory
        .cycle_boundary_indices()
        .into_iter()
        .map(|idx| profile[idx])
        .collect())
}

/// Large-m closed form of the bound for phase-matched critical cycles:
/// 4 tau² 3^(2m).
pub fn qfi_bound_approx(tau: f64, m: u32) -> f64 {
    4.0 * tau * tau * 3f64.powi(2 * m as i32)
}

/// Result of the exponential-prefactor fit Q ∝ 3^(alpha m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaFit {
    pub alpha: f64,
    /// RMS residual of log3 Q around the fit line.
    pub residual: f64,
    /// Inclusive cycle window the fit used.
    pub window: (u32, u32),
}

/// Ordinary least squares of log3 q[m] against m over the inclusive window.
///
/// `q` holds one value per cycle starting at m = 1.
pub fn fit_alpha(q: &[f64], window: (u32, u32)) -> Result<AlphaFit> {
    let (lo, hi) = window;
    if lo < 1 || hi as usize > q.len() || hi < lo + 1 {
        return Err(Error::WindowOutOfRange { lo, hi, cycles: q.len() as u32 });
    }
    let points: Vec<(f64, f64)> = (lo..=hi)
        .map(|m| {
            let value = q[(m - 1) as usize];
            if value > 0.0 && value.is_finite() {
                Ok((m as f64, value.ln() / 3f64.ln()))
            } else {
                Err(Error::NonPositiveFit)
            }
        })
        .collect::<Result<_>>()?;

    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let alpha = sxy / sxx;
    let intercept = mean_y - alpha * mean_x;
    let residual = (points
        .iter()
        .map(|p| (p.1 - alpha * p.0 - intercept).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(AlphaFit { alpha, residual, window })
}

/// One point of a dissipation sweep.
#[derive(Debug, Clone)]
pub struct KappaSweepPoint {
    /// Dimensionless dissipation 2 tau kappa.
    pub kappa_2tau: f64,
    pub q_omega: Vec<f64>,
    pub i_bound: Vec<f64>,
    pub qfi_alpha: AlphaFit,
    pub bound_alpha: AlphaFit,
}

/// Sweep the dimensionless dissipation 2 tau kappa at fixed schedule and
/// environment occupation, fitting the exponential prefactor of both the
/// exact Fisher information and its bound at every point.
///
/// Grid points evaluate in parallel; results keep the grid order.
pub fn alpha_vs_kappa(
    initial: &CovarianceState,
    schedule: &ProtocolSchedule,
    omega: f64,
    n_th: f64,
    grid: &[f64],
    settings: &QfiSettings,
    window: (u32, u32),
) -> Result<Vec<KappaSweepPoint>> {
    for &v in grid {
        if !(0.0..=4.0).contains(&v) {
            return Err(Error::InvalidParameter(format!(
                "2 tau kappa = {v} outside the supported sweep range [0, 4]"
            )));
        }
    }
    grid.par_iter()
        .map(|&kappa_2tau| {
            let noise = NoiseParams::new(kappa_2tau / (2.0 * schedule.tau()), n_th)?;
            let detail = qfi_frequency_full(initial, schedule, omega, &noise, settings)?;
            let q_omega: Vec<f64> = detail.i_omega.iter().map(|i| omega * omega * i).collect();
            let i_bound = qfi_bound(&detail.center)?;
            Ok(KappaSweepPoint {
                kappa_2tau,
                qfi_alpha: fit_alpha(&q_omega, window)?,
                bound_alpha: fit_alpha(&i_bound, window)?,
                q_omega,
                i_bound,
            })
        })
        .collect()
}

/// Per-cycle metrology summary of one experiment.
#[derive(Debug, Clone)]
pub struct MetrologyReport {
    omega: f64,
    i_omega: Vec<f64>,
    q_omega: Vec<f64>,
    i_bound: Vec<f64>,
    i_bound_approx: Vec<f64>,
    alpha: Option<AlphaFit>,
}

impl MetrologyReport {
    /// Assembles the report and enforces its invariants: equal lengths,
    /// non-negative Fisher information, and bound dominance at every cycle.
    pub fn new(
        omega: f64,
        i_omega: Vec<f64>,
        i_bound: Vec<f64>,
        i_bound_approx: Vec<f64>,
        alpha: Option<AlphaFit>,
    ) -> Result<Self> {
        if i_omega.len() != i_bound.len() || i_omega.len() != i_bound_approx.len() {
            return Err(Error::InvalidParameter(format!(
                "per-cycle array lengths differ: {} / {} / {}",
                i_omega.len(),
                i_bound.len(),
                i_bound_approx.len()
            )));
        }
        for (idx, (&i, &b)) in i_omega.iter().zip(&i_bound).enumerate() {
            if i < 0.0 || !i.is_finite() {
                return Err(Error::NonFinite { t: f64::NAN });
            }
            if i > b * (1.0 + 1e-9) {
                return Err(Error::BoundViolated {
                    cycle: idx as u32 + 1,
                    i_omega: i,
                    bound: b,
                });
            }
        }
        let q_omega = i_omega.iter().map(|i| omega * omega * i).collect();
        Ok(Self { omega, i_omega, q_omega, i_bound, i_bound_approx, alpha })
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn i_omega(&self) -> &[f64] {
        &self.i_omega
    }

    /// Signal-to-noise ratio Q = w² I, exactly.
    pub fn q_omega(&self) -> &[f64] {
        &self.q_omega
    }

    pub fn i_bound(&self) -> &[f64] {
        &self.i_bound
    }

    pub fn i_bound_approx(&self) -> &[f64] {
        &self.i_bound_approx
    }

    pub fn alpha(&self) -> Option<&AlphaFit> {
        self.alpha.as_ref()
    }

    pub fn cycles(&self) -> u32 {
        self.i_omega.len() as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::RampShape;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn schedule(tau: f64, g_tau: f64, cycles: u32) -> ProtocolSchedule {
        ProtocolSchedule::new(tau, g_tau, cycles, RampShape::Linear).unwrap()
    }

    #[test]
    fn flat_schedule_carries_no_frequency_information() {
        let s = schedule(8.0, 0.0, 3);
        let i = qfi_frequency(
            &CovarianceState::vacuum(),
            &s,
            1.0,
            &NoiseParams::none(),
            &QfiSettings::default(),
        )
        .unwrap();
        assert_eq!(i, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn noiseless_qfi_reproduces_reference_values() {
        // Frozen from the Fock-basis oracle cross-check.
        let s = schedule(8.0, 1.0, 2);
        let i = qfi_frequency(
            &CovarianceState::vacuum(),
            &s,
            1.0,
            &NoiseParams::none(),
            &QfiSettings::default(),
        )
        .unwrap();
        assert_relative_eq!(i[0], 234.783, max_relative = 1e-4);
        assert_relative_eq!(i[1], 6168.24, max_relative = 1e-4);
    }

    #[test]
    fn noiseless_alpha_fit_near_two() {
        let s = schedule(8.0, 1.0, 10);
        let detail = qfi_frequency_full(
            &CovarianceState::vacuum(),
            &s,
            1.0,
            &NoiseParams::none(),
            &QfiSettings::default(),
        )
        .unwrap();
        let fit = fit_alpha(&detail.i_omega, (5, 10)).unwrap();
        assert_abs_diff_eq!(fit.alpha, 1.8955, epsilon = 2e-3);
        // Bound dominance along the way.
        let bound = qfi_bound(&detail.center).unwrap();
        for (i, b) in detail.i_omega.iter().zip(&bound) {
            assert!(i <= b);
        }
    }

    #[test]
    fn both_coupling_conventions_give_the_same_exponent() {
        let s = schedule(8.0, 1.0, 10);
        let fixed_g = QfiSettings {
            convention: CouplingConvention::FixedRescaled,
            ..QfiSettings::default()
        };
        let a = qfi_frequency(
            &CovarianceState::vacuum(),
            &s,
            1.0,
            &NoiseParams::none(),
            &QfiSettings::default(),
        )
        .unwrap();
        let b = qfi_frequency(&CovarianceState::vacuum(), &s, 1.0, &NoiseParams::none(), &fixed_g)
            .unwrap();
        let fa = fit_alpha(&a, (5, 10)).unwrap().alpha;
        let fb = fit_alpha(&b, (5, 10)).unwrap().alpha;
        assert_abs_diff_eq!(fa, fb, epsilon = 1e-3);
    }

    #[test]
    fn eps_choice_is_robust_over_two_decades() {
        let s = schedule(8.0, 1.0, 5);
        let at = |eps_rel: f64| {
            qfi_frequency(
                &CovarianceState::vacuum(),
                &s,
                1.0,
                &NoiseParams::none(),
                &QfiSettings { eps_rel, ..QfiSettings::default() },
            )
            .unwrap()[4]
        };
        let reference = at(1e-8);
        for eps_rel in [1e-9, 1e-7] {
            assert!(((at(eps_rel) - reference) / reference).abs() < 5e-3);
        }
    }

    #[test]
    fn bound_of_occupation_free_trajectory_is_4_t_squared() {
        let s = schedule(8.0, 0.0, 2);
        let traj = propagator::evolve(
            &CovarianceState::vacuum(),
            &s,
            1.0,
            &NoiseParams::none(),
            propagator::default_step(8.0, 1.0),
        )
        .unwrap();
        let bound = qfi_bound(&traj).unwrap();
        assert_relative_eq!(bound[0], 4.0 * 16.0 * 16.0, max_relative = 1e-10);
        assert_relative_eq!(bound[1], 4.0 * 32.0 * 32.0, max_relative = 1e-10);
    }

    #[test]
    fn bound_of_constant_occupation_is_heisenberg_like() {
        let n_beta = 2.0;
        let s = schedule(8.0, 0.0, 1);
        let traj = propagator::evolve(
            &CovarianceState::thermal(n_beta).unwrap(),
            &s,
            1.0,
            &NoiseParams::none(),
            propagator::default_step(8.0, 1.0),
        )
        .unwrap();
        let bound = qfi_bound(&traj).unwrap();
        let t = s.total_duration();
        assert_relative_eq!(
            bound[0],
            4.0 * (2.0 * n_beta + 1.0).powi(2) * t * t,
            max_relative = 1e-9
        );
    }

    #[test]
    fn bound_approx_landmarks() {
        assert_eq!(qfi_bound_approx(1.0, 1), 36.0);
        assert_eq!(qfi_bound_approx(2.0, 5), 16.0 * 59049.0);
        for m in 1..10 {
            assert_eq!(qfi_bound_approx(1.0, m + 1) / qfi_bound_approx(1.0, m), 9.0);
        }
        assert_relative_eq!(
            qfi_bound_approx(1.3, 8) / qfi_bound_approx(1.3, 7),
            9.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn fit_alpha_recovers_exact_exponential() {
        let q: Vec<f64> = (1..=10).map(|m| 0.7 * 3f64.powi(2 * m)).collect();
        let fit = fit_alpha(&q, (5, 10)).unwrap();
        assert_abs_diff_eq!(fit.alpha, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fit.residual, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_alpha_of_quadratic_series_is_small() {
        // Direct regression of log3(c m²) against m over m = 5..=10.
        let q: Vec<f64> = (1..=10).map(|m| 3.0 * (m * m) as f64).collect();
        let fit = fit_alpha(&q, (5, 10)).unwrap();
        assert_abs_diff_eq!(fit.alpha, 0.250480, epsilon = 1e-5);
    }

    #[test]
    fn fit_alpha_rejects_bad_windows_and_values() {
        let q = vec![1.0, 2.0, 3.0];
        assert!(matches!(fit_alpha(&q, (2, 5)), Err(Error::WindowOutOfRange { .. })));
        assert!(matches!(fit_alpha(&q, (2, 2)), Err(Error::WindowOutOfRange { .. })));
        let q = vec![1.0, -2.0, 3.0];
        assert!(matches!(fit_alpha(&q, (1, 3)), Err(Error::NonPositiveFit)));
    }

    #[test]
    fn detuning_from_phase_matching_reduces_the_exponent() {
        // w tau = 8 (matched), 8.2 (slightly off), 9 (anti-matched).
        let alpha_at = |wt: f64| {
            let q = qfi_frequency(
                &CovarianceState::vacuum(),
                &schedule(wt, 1.0, 10),
                1.0,
                &NoiseParams::none(),
                &QfiSettings::default(),
            )
            .unwrap();
            fit_alpha(&q, (5, 10)).unwrap().alpha
        };
        let (matched, detuned, anti) = (alpha_at(8.0), alpha_at(8.2), alpha_at(9.0));
        assert_abs_diff_eq!(matched, 1.8955, epsilon = 2e-3);
        assert!(detuned > 1.0 && detuned < matched, "alpha(8.2) = {detuned}");
        assert!(anti < 0.5, "alpha(9) = {anti}");
    }

    #[test]
    fn alpha_drops_with_dissipation() {
        let s = schedule(8.0, 1.0, 10);
        let points = alpha_vs_kappa(
            &CovarianceState::vacuum(),
            &s,
            1.0,
            2.0,
            &[0.0, 0.5, 2.0],
            &QfiSettings::default(),
            (5, 10),
        )
        .unwrap();
        assert_eq!(points.len(), 3);
        assert!(points[0].qfi_alpha.alpha > points[1].qfi_alpha.alpha);
        assert!(points[1].qfi_alpha.alpha > points[2].qfi_alpha.alpha);
        // The bound overestimates the prefactor once dissipation bites.
        assert!(points[1].bound_alpha.alpha > points[1].qfi_alpha.alpha);
        assert!(alpha_vs_kappa(
            &CovarianceState::vacuum(),
            &s,
            1.0,
            2.0,
            &[5.0],
            &QfiSettings::default(),
            (5, 10),
        )
        .is_err());
    }

    #[test]
    fn report_enforces_bound_dominance() {
        let bad = MetrologyReport::new(
            1.0,
            vec![10.0],
            vec![5.0],
            vec![36.0],
            None,
        );
        assert!(matches!(bad, Err(Error::BoundViolated { .. })));
        let good = MetrologyReport::new(2.0, vec![1.0], vec![5.0], vec![36.0], None).unwrap();
        assert_eq!(good.q_omega(), &[4.0]);
    }
}
